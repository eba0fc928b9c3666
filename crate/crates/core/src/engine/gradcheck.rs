//! Finite-difference checks of analytic gradients in double precision.

use candle_core::{DType, Device, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Upsampling;
use crate::error::Result;
use crate::models::{
    fcn_fuse, ops, rag_decoder, Conv2d, EncoderTaps, FcnHead, FcnVariant, ParamStore, PyramidPooling, RagDecoder,
};

/// Central-difference step.
pub const STEP: f64 = 1e-6;
/// Denominator floor of the relative error, so that gradients that are
/// zero analytically and numerically do not divide by zero.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub fragment: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

type Forward = Box<dyn Fn() -> Result<Tensor>>;

/// A differentiable function of some f64 variables.
pub struct Fragment {
    pub name: String,
    pub vars: Vec<Var>,
    pub forward: Forward,
}

fn random_var(rng: &mut ChaCha8Rng, shape: &[usize]) -> Result<Var> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    Ok(Var::from_tensor(&Tensor::from_vec(v, shape, &Device::Cpu)?)?)
}

fn projection(shape: &[usize], seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_var(&mut rng, shape)?.as_tensor().detach())
}

/// Compares d(Σ out·R)/dv with central differences for up to `per_var`
/// evenly spaced entries of every variable. R is a fixed random tensor.
pub fn gradcheck(fragment: &Fragment, per_var: usize) -> Result<GradcheckReport> {
    let out = (fragment.forward)()?;
    let r = projection(out.dims(), 0xC0FFEE)?;
    let objective = |t: &Tensor| -> Result<f64> { Ok((t * &r)?.sum_all()?.to_scalar::<f64>()?) };
    let grads = (out * &r)?.sum_all()?.backward()?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for var in &fragment.vars {
        let base = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
            None => vec![0.0; base.len()],
        };
        let stride = base.len().div_ceil(per_var.max(1)).max(1);
        for i in (0..base.len()).step_by(stride) {
            let at = |delta: f64| -> Result<f64> {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, var.dims(), &Device::Cpu)?)?;
                objective(&(fragment.forward)()?)
            };
            let numeric = (at(STEP)? - at(-STEP)?) / (2.0 * STEP);
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
            checked += 1;
        }
        var.set(&Tensor::from_vec(base, var.dims(), &Device::Cpu)?)?;
    }
    Ok(GradcheckReport {
        fragment: fragment.name.clone(),
        max_rel_error: worst,
        checked,
    })
}

pub fn linear_fragment(seed: u64) -> Result<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_var(&mut rng, &[4, 5])?;
    let w = random_var(&mut rng, &[3, 5])?;
    let b = random_var(&mut rng, &[3])?;
    let (xt, wt, bt) = (x.as_tensor().clone(), w.as_tensor().clone(), b.as_tensor().clone());
    Ok(Fragment {
        name: "linear".into(),
        vars: vec![x, w, b],
        forward: Box::new(move || Ok(xt.matmul(&wt.t()?)?.broadcast_add(&bt)?)),
    })
}

/// Trainable variables of `store`, each jittered with N(0, 0.1²) noise.
/// Freshly initialized BatchNorm shifts are exactly zero, which can put a
/// ReLU input exactly on its kink where central differences are invalid.
fn trainable(store: &ParamStore, rng: &mut ChaCha8Rng) -> Result<Vec<Var>> {
    let normal = Normal::new(0.0, 0.1).expect("normal");
    let mut vars = Vec::new();
    for p in store.trainable() {
        let mut v = p.var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        v.iter_mut().for_each(|x| *x += normal.sample(rng));
        p.var.set(&Tensor::from_vec(v, p.var.dims(), &Device::Cpu)?)?;
        vars.push(p.var.clone());
    }
    Ok(vars)
}

/// Pyramid pooling (bins 1, 2, 3, 6) with its projections, inference mode.
pub fn pyramid_pool_fragment(seed: u64) -> Result<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_var(&mut rng, &[1, 4, 12, 12])?;
    let mut store = ParamStore::new(seed, DType::F64);
    let module = PyramidPooling::new(&mut store, "pyramid", 4, 2, [1, 2, 3, 6])?;
    let mut vars = vec![x.clone()];
    vars.extend(trainable(&store, &mut rng)?);
    let xt = x.as_tensor().clone();
    Ok(Fragment {
        name: "pyramid_pool".into(),
        vars,
        forward: Box::new(move || module.forward(&xt, false)),
    })
}

/// 2×2 max pool, unpool with the recorded indices, then a 3×3 conv. The
/// input is a permutation of levels 0.05 apart, so no perturbation of size
/// [`STEP`] can change which element wins a window.
pub fn max_unpool_fragment(seed: u64) -> Result<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * 8 * 8;
    let mut levels: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 3.0).collect();
    levels.shuffle(&mut rng);
    let x = Var::from_tensor(&Tensor::from_vec(levels, (1, 2, 8, 8), &Device::Cpu)?)?;
    let mut store = ParamStore::new(seed, DType::F64);
    let conv = Conv2d::new(&mut store, "densify", 2, 3, 3, 1, true)?;
    let mut vars = vec![x.clone()];
    vars.extend(trainable(&store, &mut rng)?);
    let xt = x.as_tensor().clone();
    Ok(Fragment {
        name: "max_unpool".into(),
        vars,
        forward: Box::new(move || {
            let (pooled, idx) = ops::max_pool2x2_with_indices(&xt)?;
            conv.forward(&ops::max_unpool2x2(&pooled, &idx, (8, 8))?)
        }),
    })
}

const TAP_WIDTHS: [usize; 4] = [3, 4, 5, 6];

/// Random taps of a 32×32 input.
fn tap_vars(rng: &mut ChaCha8Rng) -> Result<Vec<Var>> {
    TAP_WIDTHS
        .iter()
        .zip([8, 4, 2, 1])
        .map(|(&c, s)| random_var(rng, &[1, c, s, s]))
        .collect()
}

fn taps_of(vars: &[Tensor]) -> Result<EncoderTaps> {
    Ok(EncoderTaps {
        features: [vars[0].clone(), vars[1].clone(), vars[2].clone(), vars[3].clone()],
        strides: [4, 8, 16, 32],
        stem: Tensor::zeros((1, 2, 16, 16), DType::F64, &Device::Cpu)?,
        pools: Vec::new(),
    })
}

pub fn fcn_fuse_fragment(seed: u64) -> Result<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = tap_vars(&mut rng)?;
    let mut store = ParamStore::new(seed, DType::F64);
    let head = FcnHead::new(&mut store, FcnVariant::Fcn8, TAP_WIDTHS, 6)?;
    let mut vars = taps.clone();
    vars.extend(trainable(&store, &mut rng)?);
    let ts: Vec<Tensor> = taps.iter().map(|v| v.as_tensor().clone()).collect();
    Ok(Fragment {
        name: "fcn_fuse".into(),
        vars,
        forward: Box::new(move || fcn_fuse(&taps_of(&ts)?, &head)),
    })
}

pub fn rag_decoder_fragment(seed: u64) -> Result<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = tap_vars(&mut rng)?;
    let mut store = ParamStore::new(seed, DType::F64);
    let decoder = RagDecoder::new(&mut store, TAP_WIDTHS, 4, 6, Upsampling::Bilinear)?;
    let mut vars = taps.clone();
    vars.extend(trainable(&store, &mut rng)?);
    let ts: Vec<Tensor> = taps.iter().map(|v| v.as_tensor().clone()).collect();
    Ok(Fragment {
        name: "rag_decoder".into(),
        vars,
        forward: Box::new(move || rag_decoder(&taps_of(&ts)?, &decoder, false)),
    })
}

/// Every decoder fragment checked by the acceptance suite.
pub fn decoder_fragments(seed: u64) -> Result<Vec<Fragment>> {
    Ok(vec![
        pyramid_pool_fragment(seed)?,
        max_unpool_fragment(seed)?,
        fcn_fuse_fragment(seed)?,
        rag_decoder_fragment(seed)?,
    ])
}
