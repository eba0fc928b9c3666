//! SegNet decoder: unpool with the encoder's recorded indices, then
//! convolve to densify.

use candle_core::Tensor;

use super::backbone::EncoderTaps;
use super::layers::{Conv2d, ConvBn};
use super::ops;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Level {
    /// Matches channels to the pooled map the indices were recorded on.
    project: ConvBn,
    densify: ConvBn,
}

#[derive(Debug, Clone)]
pub struct SegNetDecoder {
    levels: Vec<Level>,
    classifier: Conv2d,
}

impl SegNetDecoder {
    /// `pooled_channels` lists the channel count at each encoder pool,
    /// shallow to deep.
    pub fn new(
        store: &mut ParamStore,
        pooled_channels: &[usize],
        deepest: usize,
        width: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let mut levels = Vec::with_capacity(pooled_channels.len());
        let mut in_ch = deepest;
        for (i, &ch) in pooled_channels.iter().enumerate().rev() {
            let name = format!("decoder.level{i}");
            levels.push(Level {
                project: ConvBn::relu(store, &format!("{name}.project"), in_ch, ch, 1)?,
                densify: ConvBn::relu(store, &format!("{name}.densify"), ch, width, 3)?,
            });
            in_ch = width;
        }
        Ok(SegNetDecoder {
            levels,
            classifier: Conv2d::new(store, "decoder.classifier", width, num_classes, 1, 1, true)?,
        })
    }

    /// Scores plus the sparse unpooled maps, deep to shallow.
    pub fn forward_trace(&self, taps: &EncoderTaps, train: bool) -> Result<(Tensor, Vec<Tensor>)> {
        if taps.pools.len() != self.levels.len() {
            return Err(Error::ShapeMismatch(format!(
                "decoder has {} levels but encoder recorded {} pools",
                self.levels.len(),
                taps.pools.len()
            )));
        }
        let mut y = taps.features[3].clone();
        let mut sparse = Vec::with_capacity(self.levels.len());
        for (level, record) in self.levels.iter().zip(taps.pools.iter().rev()) {
            y = level.project.forward(&y, train)?;
            y = ops::max_unpool2x2(&y, &record.indices, record.input_hw)?;
            sparse.push(y.clone());
            y = level.densify.forward(&y, train)?;
        }
        Ok((self.classifier.forward(&y)?, sparse))
    }

    pub fn forward(&self, taps: &EncoderTaps, train: bool) -> Result<Tensor> {
        Ok(self.forward_trace(taps, train)?.0)
    }
}
