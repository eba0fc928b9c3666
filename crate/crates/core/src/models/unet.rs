//! UNet decoder: upsample, concatenate the matching encoder tap, two convs.

use candle_core::Tensor;

use super::backbone::EncoderTaps;
use super::layers::{Conv2d, ConvBn, UpStep};
use super::params::ParamStore;
use crate::config::Upsampling;
use crate::error::Result;

#[derive(Debug, Clone)]
struct Level {
    up: UpStep,
    conv1: ConvBn,
    conv2: ConvBn,
}

#[derive(Debug, Clone)]
pub struct UNetDecoder {
    levels: Vec<Level>,
    last_up: UpStep,
    classifier: Conv2d,
}

impl UNetDecoder {
    /// `widths` are the four stage widths, `stem` the stem width.
    pub fn new(
        store: &mut ParamStore,
        stem: usize,
        widths: [usize; 4],
        width: usize,
        num_classes: usize,
        upsampling: Upsampling,
    ) -> Result<Self> {
        // skips from stride 16 down to the stride-2 stem
        let skips = [widths[2], widths[1], widths[0], stem];
        let mut levels = Vec::with_capacity(4);
        let mut in_ch = widths[3];
        for (i, skip) in skips.into_iter().enumerate() {
            let name = format!("decoder.level{i}");
            levels.push(Level {
                up: UpStep::new(store, &format!("{name}.up"), in_ch, width, upsampling)?,
                conv1: ConvBn::relu(store, &format!("{name}.conv1"), width + skip, width, 3)?,
                conv2: ConvBn::relu(store, &format!("{name}.conv2"), width, width, 3)?,
            });
            in_ch = width;
        }
        Ok(UNetDecoder {
            levels,
            last_up: UpStep::new(store, "decoder.last_up", width, width, upsampling)?,
            classifier: Conv2d::new(store, "decoder.classifier", width, num_classes, 1, 1, true)?,
        })
    }

    pub fn forward(&self, taps: &EncoderTaps, train: bool) -> Result<Tensor> {
        let skips = [&taps.features[2], &taps.features[1], &taps.features[0], &taps.stem];
        let mut y = taps.features[3].clone();
        for (level, skip) in self.levels.iter().zip(skips) {
            y = level.up.forward(&y, train)?;
            y = Tensor::cat(&[&y, skip], 1)?;
            y = level.conv1.forward(&y, train)?;
            y = level.conv2.forward(&y, train)?;
        }
        y = self.last_up.forward(&y, train)?;
        self.classifier.forward(&y)
    }
}
