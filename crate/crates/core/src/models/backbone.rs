//! Bottleneck residual encoder producing feature taps at strides 4, 8, 16
//! and 32 (plus the stride-2 stem output).

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::layers::ConvBn;
use super::ops;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: String,
    pub stem_width: usize,
    /// Output widths of the four stages.
    pub stage_widths: [usize; 4],
    /// Bottleneck blocks per stage.
    pub blocks: [usize; 4],
    /// Stage width divided by the bottleneck's inner width.
    pub expansion: usize,
}

impl BackboneSpec {
    pub const PRESETS: [&'static str; 2] = ["resnet50", "compact"];

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "resnet50" => Some(Self::resnet50()),
            "compact" => Some(Self::compact()),
            _ => None,
        }
    }

    /// 50-layer layout: 3-4-6-3 bottlenecks, widths 256..2048.
    pub fn resnet50() -> Self {
        BackboneSpec {
            name: "resnet50".into(),
            stem_width: 64,
            stage_widths: [256, 512, 1024, 2048],
            blocks: [3, 4, 6, 3],
            expansion: 4,
        }
    }

    /// Same topology with one block per stage and 1/8 of the widths, for
    /// CPU-scale tests and fixtures.
    pub fn compact() -> Self {
        BackboneSpec {
            name: "compact".into(),
            stem_width: 16,
            stage_widths: [32, 64, 128, 256],
            blocks: [1, 1, 1, 1],
            expansion: 4,
        }
    }

    /// Default decoder width paired with this backbone.
    pub fn decoder_width(&self) -> usize {
        (self.stage_widths[0]).clamp(8, 256)
    }
}

/// How the encoder reduces resolution between stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Downsampling {
    /// Stride-2 stem and stride-2 bottlenecks (ResNet).
    Strided,
    /// Stride-1 convolutions and 2×2 max pools that record their argmax
    /// positions (SegNet).
    Pooled,
    /// Stages 3 and 4 keep stride 8 and dilate by 2 and 4 instead.
    Dilated,
}

#[derive(Debug, Clone)]
pub struct PoolRecord {
    /// (N, C, H/2, W/2) window positions 0..4.
    pub indices: Tensor,
    /// Spatial size before pooling.
    pub input_hw: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct EncoderTaps {
    /// Stage outputs, shallow to deep.
    pub features: [Tensor; 4],
    /// Stride of each entry of `features` relative to the input.
    pub strides: [usize; 4],
    /// Stem output at stride 2.
    pub stem: Tensor,
    /// One record per 2×2 pool, shallow to deep; empty unless pooled.
    pub pools: Vec<PoolRecord>,
}

impl EncoderTaps {
    /// Checks stride bookkeeping against actual shapes and that every
    /// recorded index stays inside its window.
    pub fn check(&self, input_hw: (usize, usize)) -> Result<()> {
        for (f, s) in self.features.iter().zip(self.strides) {
            let (_, _, h, w) = f.dims4()?;
            if (h * s, w * s) != input_hw {
                return Err(Error::ShapeMismatch(format!(
                    "tap at stride {s} is {h}x{w} for input {input_hw:?}"
                )));
            }
        }
        for p in &self.pools {
            let max = p
                .indices
                .flatten_all()?
                .max(0)?
                .to_scalar::<u32>()?;
            if max >= 4 {
                return Err(Error::IndexOutOfWindow { index: max });
            }
            let (_, _, h, w) = p.indices.dims4()?;
            if (2 * h, 2 * w) != p.input_hw {
                return Err(Error::ShapeMismatch(format!(
                    "pool record {h}x{w} does not halve {:?}",
                    p.input_hw
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Bottleneck {
    reduce: ConvBn,
    spatial: ConvBn,
    expand: ConvBn,
    shortcut: Option<ConvBn>,
}

impl Bottleneck {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        expansion: usize,
        stride: usize,
        dilation: usize,
    ) -> Result<Self> {
        let mid = (out_ch / expansion).max(1);
        let shortcut = if in_ch != out_ch || stride != 1 {
            Some(ConvBn::new(store, &format!("{name}.shortcut"), in_ch, out_ch, 1, stride, 1, false)?)
        } else {
            None
        };
        Ok(Bottleneck {
            reduce: ConvBn::new(store, &format!("{name}.reduce"), in_ch, mid, 1, 1, 1, true)?,
            spatial: ConvBn::new(store, &format!("{name}.spatial"), mid, mid, 3, stride, dilation, true)?,
            expand: ConvBn::new(store, &format!("{name}.expand"), mid, out_ch, 1, 1, 1, false)?,
            shortcut,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.reduce.forward(x, train)?;
        let y = self.spatial.forward(&y, train)?;
        let y = self.expand.forward(&y, train)?;
        let skip = match &self.shortcut {
            Some(s) => s.forward(x, train)?,
            None => x.clone(),
        };
        Ok((y + skip)?.relu()?)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    spec: BackboneSpec,
    mode: Downsampling,
    stem: ConvBn,
    stages: Vec<Vec<Bottleneck>>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, spec: &BackboneSpec, mode: Downsampling) -> Result<Self> {
        let stem_stride = if mode == Downsampling::Pooled { 1 } else { 2 };
        let stem = ConvBn::new(store, "encoder.stem", 3, spec.stem_width, 7, stem_stride, 1, true)?;
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = spec.stem_width;
        for s in 0..4 {
            let (stride, dilation) = match (mode, s) {
                (_, 0) | (Downsampling::Pooled, _) => (1, 1),
                (Downsampling::Dilated, 2) => (1, 2),
                (Downsampling::Dilated, 3) => (1, 4),
                _ => (2, 1),
            };
            let mut blocks = Vec::with_capacity(spec.blocks[s]);
            for b in 0..spec.blocks[s] {
                let name = format!("encoder.stage{}.block{b}", s + 1);
                let out = spec.stage_widths[s];
                let (st, ch) = if b == 0 { (stride, in_ch) } else { (1, out) };
                blocks.push(Bottleneck::new(store, &name, ch, out, spec.expansion, st, dilation)?);
            }
            in_ch = spec.stage_widths[s];
            stages.push(blocks);
        }
        Ok(Encoder {
            spec: spec.clone(),
            mode,
            stem,
            stages,
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn mode(&self) -> Downsampling {
        self.mode
    }

    pub fn strides(&self) -> [usize; 4] {
        match self.mode {
            Downsampling::Dilated => [4, 8, 8, 8],
            _ => [4, 8, 16, 32],
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<EncoderTaps> {
        let mut pools = Vec::new();
        let mut pool = |t: &Tensor, record: bool| -> Result<Tensor> {
            let (_, _, h, w) = t.dims4()?;
            let (p, idx) = ops::max_pool2x2_with_indices(t)?;
            if record {
                pools.push(PoolRecord {
                    indices: idx,
                    input_hw: (h, w),
                });
            }
            Ok(p)
        };
        let pooled = self.mode == Downsampling::Pooled;
        let mut y = self.stem.forward(x, train)?;
        if pooled {
            y = pool(&y, true)?;
        }
        let stem = y.clone();
        y = pool(&y, pooled)?;
        let mut outs = Vec::with_capacity(4);
        for (s, blocks) in self.stages.iter().enumerate() {
            if pooled && s > 0 {
                y = pool(&y, true)?;
            }
            for block in blocks {
                y = block.forward(&y, train)?;
            }
            outs.push(y.clone());
        }
        let features: [Tensor; 4] = outs.try_into().expect("four stages");
        Ok(EncoderTaps {
            features,
            strides: self.strides(),
            stem,
            pools,
        })
    }
}
