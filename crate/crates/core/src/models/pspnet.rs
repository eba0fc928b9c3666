//! Pyramid scene parsing head.

use candle_core::Tensor;

use super::backbone::EncoderTaps;
use super::layers::{Conv2d, ConvBn, UpStep};
use super::ops;
use super::params::ParamStore;
use crate::config::Upsampling;
use crate::error::Result;

/// Average-pools the input to each of four b×b grids, projects channels
/// with a 1×1 conv, upsamples back and concatenates with the input.
#[derive(Debug, Clone)]
pub struct PyramidPooling {
    bins: [usize; 4],
    branches: Vec<ConvBn>,
    in_channels: usize,
    branch_channels: usize,
}

impl PyramidPooling {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        branch_channels: usize,
        bins: [usize; 4],
    ) -> Result<Self> {
        let branches = bins
            .iter()
            .map(|b| ConvBn::relu(store, &format!("{name}.bin{b}"), in_channels, branch_channels, 1))
            .collect::<Result<_>>()?;
        Ok(PyramidPooling {
            bins,
            branches,
            in_channels,
            branch_channels,
        })
    }

    pub fn bins(&self) -> [usize; 4] {
        self.bins
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + 4 * self.branch_channels
    }

    /// Branch inputs before projection, each b×b.
    pub fn pooled(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.bins.iter().map(|&b| ops::adaptive_avg_pool(x, b)).collect()
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        let mut parts = vec![x.clone()];
        for (pooled, branch) in self.pooled(x)?.iter().zip(&self.branches) {
            let y = branch.forward(pooled, train)?;
            parts.push(ops::resize_bilinear(&y, h, w)?);
        }
        Ok(Tensor::cat(&parts, 1)?)
    }
}

/// Runs `module` on `features`; see [`PyramidPooling`].
pub fn pyramid_pool(features: &Tensor, module: &PyramidPooling, train: bool) -> Result<Tensor> {
    module.forward(features, train)
}

#[derive(Debug, Clone)]
pub struct PspHead {
    pub pyramid: PyramidPooling,
    fuse: ConvBn,
    ups: Vec<UpStep>,
    classifier: Conv2d,
}

impl PspHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        in_channels: usize,
        stride: usize,
        width: usize,
        bins: [usize; 4],
        branch_channels: usize,
        num_classes: usize,
        upsampling: Upsampling,
    ) -> Result<Self> {
        let pyramid = PyramidPooling::new(store, "decoder.pyramid", in_channels, branch_channels, bins)?;
        let fuse = ConvBn::relu(store, "decoder.fuse", pyramid.out_channels(), width, 3)?;
        let steps = stride.trailing_zeros() as usize;
        let ups = (0..steps)
            .map(|i| UpStep::new(store, &format!("decoder.up{i}"), width, width, upsampling))
            .collect::<Result<_>>()?;
        let classifier = Conv2d::new(store, "decoder.classifier", width, num_classes, 1, 1, true)?;
        Ok(PspHead {
            pyramid,
            fuse,
            ups,
            classifier,
        })
    }

    pub fn forward(&self, taps: &EncoderTaps, train: bool) -> Result<Tensor> {
        let mut y = self.pyramid.forward(&taps.features[3], train)?;
        y = self.fuse.forward(&y, train)?;
        for up in &self.ups {
            y = up.forward(&y, train)?;
        }
        self.classifier.forward(&y)
    }
}
