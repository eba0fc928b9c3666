use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::models::ops;

/// Mean per-pixel categorical cross-entropy of (N, C, H, W) scores against
/// (N, H, W) u32 targets. With `weights`, each pixel counts `weights[target]`
/// and the sum is normalized by the total weight.
pub fn cross_entropy(scores: &Tensor, targets: &Tensor, weights: Option<&[f64]>) -> Result<Tensor> {
    let (n, c, h, w) = scores.dims4()?;
    if targets.dims() != [n, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "targets {:?} do not match scores {:?}",
            targets.dims(),
            scores.dims()
        )));
    }
    let logp = ops::log_softmax(scores, 1)?;
    let idx = targets.to_dtype(DType::U32)?.unsqueeze(1)?;
    let picked = logp.gather(&idx.contiguous()?, 1)?.squeeze(1)?;
    match weights {
        None => Ok(picked.mean_all()?.neg()?),
        Some(ws) => {
            if ws.len() != c {
                return Err(Error::ShapeMismatch(format!("{} class weights for {c} classes", ws.len())));
            }
            let table = Tensor::new(ws, scores.device())?.to_dtype(scores.dtype())?;
            let pw = table
                .index_select(&idx.flatten_all()?, 0)?
                .reshape((n, h, w))?;
            let total = pw.sum_all()?;
            Ok((picked * &pw)?.sum_all()?.neg()?.broadcast_div(&total)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn matches_hand_computation() {
        // one pixel, logits [0, ln 3] → p(class1) = 3/4
        let s = Tensor::new(&[0.0f64, 3f64.ln()], &Device::Cpu)
            .unwrap()
            .reshape((1, 2, 1, 1))
            .unwrap();
        let t = Tensor::new(&[1u32], &Device::Cpu).unwrap().reshape((1, 1, 1)).unwrap();
        let l = cross_entropy(&s, &t, None).unwrap().to_scalar::<f64>().unwrap();
        assert!((l - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_change_nothing() {
        let s = Tensor::randn(0f64, 1.0, (2, 6, 3, 3), &Device::Cpu).unwrap();
        let t = Tensor::new(&[0u32, 1, 2, 3, 4, 5, 0, 1, 2], &Device::Cpu)
            .unwrap()
            .reshape((1, 3, 3))
            .unwrap()
            .repeat((2, 1, 1))
            .unwrap();
        let a = cross_entropy(&s, &t, None).unwrap().to_scalar::<f64>().unwrap();
        let b = cross_entropy(&s, &t, Some(&[2.0; 6])).unwrap().to_scalar::<f64>().unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a >= 0.0);
    }
}
