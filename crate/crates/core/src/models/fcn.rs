//! Fully convolutional heads: 1×1 class scores on encoder taps, fused and
//! upsampled with fixed bilinear kernels.

use candle_core::Tensor;

use super::backbone::EncoderTaps;
use super::layers::Conv2d;
use super::ops;
use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcnVariant {
    Fcn8,
    Fcn32,
}

#[derive(Debug, Clone)]
pub struct FcnHead {
    pub variant: FcnVariant,
    score32: Conv2d,
    score16: Option<Conv2d>,
    score8: Option<Conv2d>,
}

impl FcnHead {
    pub fn new(
        store: &mut ParamStore,
        variant: FcnVariant,
        widths: [usize; 4],
        num_classes: usize,
    ) -> Result<Self> {
        let score32 = Conv2d::new(store, "decoder.score32", widths[3], num_classes, 1, 1, true)?;
        let (score16, score8) = match variant {
            FcnVariant::Fcn32 => (None, None),
            FcnVariant::Fcn8 => (
                Some(Conv2d::new(store, "decoder.score16", widths[2], num_classes, 1, 1, true)?),
                Some(Conv2d::new(store, "decoder.score8", widths[1], num_classes, 1, 1, true)?),
            ),
        };
        Ok(FcnHead {
            variant,
            score32,
            score16,
            score8,
        })
    }

    /// Class scores at stride 32, before any upsampling.
    pub fn coarse_scores(&self, taps: &EncoderTaps) -> Result<Tensor> {
        self.score32.forward(&taps.features[3])
    }
}

fn up_to(x: &Tensor, like: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = like.dims4()?;
    ops::resize_bilinear(x, h, w)
}

/// FCN-8: ×2 and add stride-16 scores, ×2 and add stride-8 scores, then
/// ×8. FCN-32 takes the same three resampling steps without the additions,
/// so FCN-8 with zeroed skip scores reproduces it exactly.
pub fn fcn_fuse(taps: &EncoderTaps, head: &FcnHead) -> Result<Tensor> {
    let (h, w) = {
        let (_, _, h, w) = taps.features[0].dims4()?;
        (h * taps.strides[0], w * taps.strides[0])
    };
    let s32 = head.coarse_scores(taps)?;
    match (&head.score16, &head.score8) {
        (Some(score16), Some(score8)) => {
            let s16 = score16.forward(&taps.features[2])?;
            let s8 = score8.forward(&taps.features[1])?;
            let y = (up_to(&s32, &s16)? + s16)?;
            let y = (up_to(&y, &s8)? + s8)?;
            ops::resize_bilinear(&y, h, w)
        }
        _ => {
            let y = up_to(&s32, &taps.features[2])?;
            let y = up_to(&y, &taps.features[1])?;
            ops::resize_bilinear(&y, h, w)
        }
    }
}
