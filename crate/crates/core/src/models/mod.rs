//! The architecture zoo. Every model is a residual [`Encoder`] plus one
//! decoder head and maps an (N, 3, H, W) batch to (N, 6, H, W) class scores.

mod backbone;
mod fcn;
mod layers;
pub mod ops;
mod params;
mod pspnet;
mod ragnet;
mod segnet;
mod unet;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

pub use backbone::{BackboneSpec, Downsampling, Encoder, EncoderTaps, PoolRecord};
pub use fcn::{fcn_fuse, FcnHead, FcnVariant};
pub use layers::{BatchNorm, Conv2d, ConvBn, UpStep};
pub use params::{Param, ParamStore};
pub use pspnet::{pyramid_pool, PspHead, PyramidPooling};
pub use ragnet::{rag_decoder, RagDecoder};
pub use segnet::SegNetDecoder;
pub use unet::UNetDecoder;

use crate::classmap::NUM_CLASSES;
use crate::config::{Architecture, RunConfig, Upsampling};
use crate::error::{Error, Result};

pub const DEFAULT_PYRAMID_BINS: [usize; 4] = [1, 2, 3, 6];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderSpec {
    /// Channel width of learned decoder layers.
    pub width: usize,
    pub pyramid_bins: [usize; 4],
    /// Per-branch channels of the pyramid module; `None` means a quarter of
    /// the deepest stage width.
    pub pyramid_channels: Option<usize>,
    pub upsampling: Upsampling,
}

impl DecoderSpec {
    pub fn for_backbone(backbone: &BackboneSpec) -> Self {
        DecoderSpec {
            width: backbone.decoder_width(),
            pyramid_bins: DEFAULT_PYRAMID_BINS,
            pyramid_channels: None,
            upsampling: Upsampling::Bilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub num_classes: usize,
    /// (height, width)
    pub input_size: [usize; 2],
    pub backbone: BackboneSpec,
    pub decoder: DecoderSpec,
}

impl ModelSpec {
    /// ResNet-50 layout with default decoder settings.
    pub fn new(architecture: Architecture, input_size: [usize; 2]) -> Self {
        Self::with_backbone(architecture, input_size, BackboneSpec::resnet50())
    }

    pub fn with_backbone(architecture: Architecture, input_size: [usize; 2], backbone: BackboneSpec) -> Self {
        ModelSpec {
            architecture,
            num_classes: NUM_CLASSES,
            input_size,
            decoder: DecoderSpec::for_backbone(&backbone),
            backbone,
        }
    }

    pub fn from_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let backbone = BackboneSpec::preset(&config.backbone)
            .ok_or_else(|| Error::InvalidConfig(vec![format!("unknown backbone `{}`", config.backbone)]))?;
        let mut spec = Self::with_backbone(config.architecture, config.input_size, backbone);
        spec.decoder.upsampling = config.upsampling;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::SizeNotDivisible { height: h, width: w });
        }
        let mut problems = Vec::new();
        if self.num_classes != NUM_CLASSES {
            problems.push(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes));
        }
        if self.decoder.width == 0 {
            problems.push("decoder width must be positive".into());
        }
        if self.decoder.pyramid_bins.contains(&0) {
            problems.push("pyramid bins must be positive".into());
        }
        if self.decoder.pyramid_channels == Some(0) {
            problems.push("pyramid channels must be positive".into());
        }
        let b = &self.backbone;
        if b.stem_width == 0 || b.expansion == 0 || b.stage_widths.contains(&0) || b.blocks.contains(&0) {
            problems.push(format!("backbone `{}` has a zero width or block count", b.name));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn downsampling(&self) -> Downsampling {
        match self.architecture {
            Architecture::SegNet => Downsampling::Pooled,
            Architecture::PspNet => Downsampling::Dilated,
            _ => Downsampling::Strided,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    RagNet(RagDecoder),
    PspNet(PspHead),
    SegNet(SegNetDecoder),
    UNet(UNetDecoder),
    Fcn(FcnHead),
}

/// A built network. Parameter tensors live in the [`ParamStore`]; the
/// encoder and head hold views that share their storage.
#[derive(Debug)]
pub struct SegmentationModel {
    spec: ModelSpec,
    seed: u64,
    store: ParamStore,
    encoder: Encoder,
    head: Head,
}

/// Builds `spec` in f32 with seeded initialization.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<SegmentationModel> {
    build_with_dtype(spec, seed, DType::F32)
}

pub fn build_with_dtype(spec: &ModelSpec, seed: u64, dtype: DType) -> Result<SegmentationModel> {
    spec.validate()?;
    let mut store = ParamStore::new(seed, dtype);
    let encoder = Encoder::new(&mut store, &spec.backbone, spec.downsampling())?;
    let b = &spec.backbone;
    let d = &spec.decoder;
    let n = spec.num_classes;
    let head = match spec.architecture {
        Architecture::RagNet => Head::RagNet(RagDecoder::new(&mut store, b.stage_widths, d.width, n, d.upsampling)?),
        Architecture::PspNet => {
            let deepest = b.stage_widths[3];
            Head::PspNet(PspHead::new(
                &mut store,
                deepest,
                encoder.strides()[3],
                d.width,
                d.pyramid_bins,
                d.pyramid_channels.unwrap_or((deepest / 4).max(1)),
                n,
                d.upsampling,
            )?)
        }
        Architecture::SegNet => {
            let [w1, w2, w3, w4] = b.stage_widths;
            let pooled = [b.stem_width, b.stem_width, w1, w2, w3];
            Head::SegNet(SegNetDecoder::new(&mut store, &pooled, w4, d.width, n)?)
        }
        Architecture::UNet => Head::UNet(UNetDecoder::new(&mut store, b.stem_width, b.stage_widths, d.width, n, d.upsampling)?),
        Architecture::Fcn8 => Head::Fcn(FcnHead::new(&mut store, FcnVariant::Fcn8, b.stage_widths, n)?),
        Architecture::Fcn32 => Head::Fcn(FcnHead::new(&mut store, FcnVariant::Fcn32, b.stage_widths, n)?),
    };
    Ok(SegmentationModel {
        spec: spec.clone(),
        seed,
        store,
        encoder,
        head,
    })
}

impl SegmentationModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Feature extractor shared with the segmentation path.
    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count("")
    }

    pub fn encoder_parameter_count(&self) -> usize {
        self.store.count("encoder.")
    }

    pub fn decoder_parameter_count(&self) -> usize {
        self.store.count("decoder.")
    }

    pub fn checksum(&self) -> Result<String> {
        self.store.checksum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let dims = x.dims();
        let [h, w] = self.spec.input_size;
        if dims.len() != 4 || dims[1] != 3 || dims[2] != h || dims[3] != w {
            return Err(Error::ShapeMismatch(format!(
                "expected input (N, 3, {h}, {w}), got {dims:?}"
            )));
        }
        Ok(())
    }

    /// Inference-mode scores.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_t(x, false)
    }

    /// `train` selects batch statistics in normalization layers and
    /// updates their running averages.
    pub fn forward_t(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.check_input(x)?;
        let x = x.to_dtype(self.dtype())?;
        let taps = self.encoder.forward(&x, train)?;
        match &self.head {
            Head::RagNet(d) => rag_decoder(&taps, d, train),
            Head::PspNet(d) => d.forward(&taps, train),
            Head::SegNet(d) => d.forward(&taps, train),
            Head::UNet(d) => d.forward(&taps, train),
            Head::Fcn(d) => fcn_fuse(&taps, d),
        }
    }
}
