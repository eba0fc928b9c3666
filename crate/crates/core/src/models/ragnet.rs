//! RAGNet segmentation unit, read as a feature-pyramid decoder: 1×1
//! laterals on all four taps merged top-down, every pyramid level smoothed
//! and summed at stride 4, then two ×2 steps to full resolution.

use candle_core::Tensor;

use super::backbone::EncoderTaps;
use super::layers::{Conv2d, ConvBn, UpStep};
use super::ops;
use super::params::ParamStore;
use crate::config::Upsampling;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct RagDecoder {
    /// Shallow (stride 4) to deep (stride 32).
    laterals: Vec<Conv2d>,
    smooth: Vec<ConvBn>,
    ups: Vec<UpStep>,
    classifier: Conv2d,
}

impl RagDecoder {
    pub fn new(
        store: &mut ParamStore,
        widths: [usize; 4],
        width: usize,
        num_classes: usize,
        upsampling: Upsampling,
    ) -> Result<Self> {
        let mut laterals = Vec::with_capacity(4);
        let mut smooth = Vec::with_capacity(4);
        for (i, w) in widths.into_iter().enumerate() {
            laterals.push(Conv2d::new(store, &format!("decoder.lateral{}", i + 1), w, width, 1, 1, true)?);
            smooth.push(ConvBn::relu(store, &format!("decoder.smooth{}", i + 1), width, width, 3)?);
        }
        let ups = (0..2)
            .map(|i| UpStep::new(store, &format!("decoder.up{i}"), width, width, upsampling))
            .collect::<Result<_>>()?;
        Ok(RagDecoder {
            laterals,
            smooth,
            ups,
            classifier: Conv2d::new(store, "decoder.classifier", width, num_classes, 1, 1, true)?,
        })
    }
}

pub fn rag_decoder(taps: &EncoderTaps, decoder: &RagDecoder, train: bool) -> Result<Tensor> {
    let mut merged: Vec<Tensor> = Vec::with_capacity(4);
    let mut above: Option<Tensor> = None;
    for k in (0..4).rev() {
        let mut p = decoder.laterals[k].forward(&taps.features[k])?;
        if let Some(a) = &above {
            let (_, _, h, w) = p.dims4()?;
            p = (p + ops::resize_bilinear(a, h, w)?)?;
        }
        above = Some(p.clone());
        merged.push(p);
    }
    merged.reverse();
    let (_, _, h4, w4) = merged[0].dims4()?;
    let mut y: Option<Tensor> = None;
    for (p, smooth) in merged.iter().zip(&decoder.smooth) {
        let s = ops::resize_bilinear(&smooth.forward(p, train)?, h4, w4)?;
        y = Some(match y {
            Some(acc) => (acc + s)?,
            None => s,
        });
    }
    let mut y = y.expect("four levels");
    for up in &decoder.ups {
        y = up.forward(&y, train)?;
    }
    decoder.classifier.forward(&y)
}
