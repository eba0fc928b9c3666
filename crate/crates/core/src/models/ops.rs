//! Differentiable tensor operations shared by the encoder and decoders.
//!
//! All feature maps are NCHW. Resampling (bilinear upsampling, adaptive
//! average pooling) is expressed as a pair of dense interpolation matrices
//! applied along H and W, which keeps it exact and differentiable through
//! ordinary matmuls.

use candle_core::{DType, Device, Tensor, D};

use crate::error::{Error, Result};

/// Row-stochastic matrix (out × in) for 1-D linear interpolation with
/// half-pixel centers: source = (dst + 0.5)·in/out − 0.5, clamped at borders.
pub fn bilinear_weights(out: usize, inp: usize) -> Vec<f64> {
    let mut m = vec![0.0; out * inp];
    let scale = inp as f64 / out as f64;
    for o in 0..out {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(inp - 1);
        let i1 = (i0 + 1).min(inp - 1);
        let frac = src - i0 as f64;
        m[o * inp + i0] += 1.0 - frac;
        m[o * inp + i1] += frac;
    }
    m
}

/// Averaging matrix (out × in) of adaptive average pooling: bin `o` covers
/// source indices floor(o·in/out) .. ceil((o+1)·in/out).
pub fn adaptive_avg_weights(out: usize, inp: usize) -> Vec<f64> {
    let mut m = vec![0.0; out * inp];
    for o in 0..out {
        let start = o * inp / out;
        let end = ((o + 1) * inp).div_ceil(out);
        let w = 1.0 / (end - start) as f64;
        for i in start..end {
            m[o * inp + i] = w;
        }
    }
    m
}

fn matrix(values: Vec<f64>, rows: usize, cols: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(values, (rows, cols), device)?.to_dtype(dtype)?)
}

/// Applies `mh` (H'×H) on the left and `mw` (W'×W) on the right of every
/// H×W plane of `x`.
pub fn separable_resample(x: &Tensor, mh: &Tensor, mw: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let (h2, _) = mh.dims2()?;
    let (w2, _) = mw.dims2()?;
    // along W
    let y = x
        .contiguous()?
        .reshape((b * c * h, w))?
        .matmul(&mw.t()?)?
        .reshape((b, c, h, w2))?;
    // along H
    let y = y
        .transpose(2, 3)?
        .contiguous()?
        .reshape((b * c * w2, h))?
        .matmul(&mh.t()?)?
        .reshape((b, c, w2, h2))?
        .transpose(2, 3)?
        .contiguous()?;
    Ok(y)
}

pub fn resize_bilinear(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    let mh = matrix(bilinear_weights(height, h), height, h, x.dtype(), x.device())?;
    let mw = matrix(bilinear_weights(width, w), width, w, x.dtype(), x.device())?;
    separable_resample(x, &mh, &mw)
}

pub fn adaptive_avg_pool(x: &Tensor, bins: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let mh = matrix(adaptive_avg_weights(bins, h), bins, h, x.dtype(), x.device())?;
    let mw = matrix(adaptive_avg_weights(bins, w), bins, w, x.dtype(), x.device())?;
    separable_resample(x, &mh, &mw)
}

/// 2×2 stride-2 max pooling that also returns, for every output element,
/// the position of its maximum inside the window (0..4, row-major). Ties
/// resolve to the first position.
pub fn max_pool2x2_with_indices(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "2x2 pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    let windows = x
        .reshape((b, c, h / 2, 2, w / 2, 2))?
        .permute((0, 1, 2, 4, 3, 5))?
        .contiguous()?
        .reshape((b, c, h / 2, w / 2, 4))?;
    let indices = windows.argmax_keepdim(D::Minus1)?;
    // gather keeps the gradient on a single element even with ties
    let pooled = windows.gather(&indices, D::Minus1)?.squeeze(D::Minus1)?;
    Ok((pooled, indices.squeeze(D::Minus1)?))
}

/// Inverse placement of [`max_pool2x2_with_indices`]: each pooled value goes
/// to its recorded window position, everything else is zero.
pub fn max_unpool2x2(pooled: &Tensor, indices: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (b, c, h, w) = pooled.dims4()?;
    if indices.dims() != pooled.dims() {
        return Err(Error::ShapeMismatch(format!(
            "unpool indices {:?} do not match pooled {:?}",
            indices.dims(),
            pooled.dims()
        )));
    }
    if target != (2 * h, 2 * w) {
        return Err(Error::ShapeMismatch(format!(
            "unpool target {target:?} is not twice {h}x{w}"
        )));
    }
    let max_index = indices.max_all()?.to_dtype(DType::U32)?.to_scalar::<u32>()?;
    if max_index >= 4 {
        return Err(Error::IndexOutOfWindow { index: max_index });
    }
    let slots = Tensor::arange(0u32, 4, pooled.device())?.reshape((1, 1, 1, 1, 4))?;
    let one_hot = indices
        .to_dtype(DType::U32)?
        .unsqueeze(D::Minus1)?
        .broadcast_eq(&slots)?
        .to_dtype(pooled.dtype())?;
    let placed = one_hot.broadcast_mul(&pooled.unsqueeze(D::Minus1)?)?;
    Ok(placed
        .reshape((b, c, h, w, 2, 2))?
        .permute((0, 1, 2, 4, 3, 5))?
        .contiguous()?
        .reshape((b, c, 2 * h, 2 * w))?)
}

pub fn log_softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let max = x.max_keepdim(dim)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(dim)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Per-pixel class indices of an (N, C, H, W) score tensor, as (N, H, W) u32.
pub fn argmax_channels(scores: &Tensor) -> Result<Tensor> {
    Ok(scores.argmax(1)?)
}
