//! Run configuration and its TOML file format.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classmap::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::models::BackboneSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "RAGNet")]
    RagNet,
    #[serde(rename = "PSPNet")]
    PspNet,
    #[serde(rename = "SegNet")]
    SegNet,
    #[serde(rename = "UNet")]
    UNet,
    #[serde(rename = "FCN8")]
    Fcn8,
    #[serde(rename = "FCN32")]
    Fcn32,
}

impl Architecture {
    /// Column order of the transferability table.
    pub const ALL: [Architecture; 6] = [
        Architecture::RagNet,
        Architecture::PspNet,
        Architecture::SegNet,
        Architecture::UNet,
        Architecture::Fcn8,
        Architecture::Fcn32,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::RagNet => "RAGNet",
            Architecture::PspNet => "PSPNet",
            Architecture::SegNet => "SegNet",
            Architecture::UNet => "UNet",
            Architecture::Fcn8 => "FCN8",
            Architecture::Fcn32 => "FCN32",
        }
    }

    /// Label used in published tables ("FCN-8" rather than "FCN8").
    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::Fcn8 => "FCN-8",
            Architecture::Fcn32 => "FCN-32",
            other => other.as_str(),
        }
    }

    pub fn short_code(self) -> &'static str {
        match self {
            Architecture::RagNet => "RN",
            Architecture::PspNet => "PN",
            Architecture::SegNet => "SN",
            Architecture::UNet => "UN",
            Architecture::Fcn8 => "F-8",
            Architecture::Fcn32 => "F-32",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Architecture::ALL
            .into_iter()
            .find(|a| {
                a.as_str().eq_ignore_ascii_case(&key)
                    || a.short_code().replace('-', "").eq_ignore_ascii_case(&key)
            })
            .ok_or_else(|| Error::UnsupportedArchitecture(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    #[serde(rename = "ADADELTA")]
    Adadelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRateMode {
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    /// Bilinear interpolation (followed by a convolution in learned decoders).
    #[default]
    Bilinear,
    /// Learned stride-2 transposed convolutions.
    Transposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    pub backbone: String,
    /// (height, width) in pixels.
    pub input_size: [usize; 2],
    pub num_classes: usize,
    pub optimizer: Optimizer,
    pub learning_rate_mode: LearningRateMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub upsampling: Upsampling,
}

/// Every field optional so that validation can report all problems at once.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    architecture: Option<String>,
    backbone: Option<String>,
    input_size: Option<Vec<i64>>,
    num_classes: Option<i64>,
    optimizer: Option<String>,
    learning_rate_mode: Option<String>,
    epochs: Option<i64>,
    batch_size: Option<i64>,
    seed: Option<u64>,
    train_manifest: Option<PathBuf>,
    test_manifest: Option<PathBuf>,
    class_weights: Option<Vec<f64>>,
    augment: Option<bool>,
    upsampling: Option<Upsampling>,
}

pub const DEFAULT_BACKBONE: &str = "resnet50";
pub const DEFAULT_BATCH_SIZE: usize = 8;

impl RunConfig {
    /// Configuration with defaults for everything except what has none.
    pub fn new(
        architecture: Architecture,
        input_size: [usize; 2],
        epochs: usize,
        train_manifest: impl Into<PathBuf>,
        test_manifest: impl Into<PathBuf>,
    ) -> Result<Self> {
        let config = RunConfig {
            architecture,
            backbone: DEFAULT_BACKBONE.to_string(),
            input_size,
            num_classes: NUM_CLASSES,
            optimizer: Optimizer::Adadelta,
            learning_rate_mode: LearningRateMode::Default,
            epochs,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            train_manifest: train_manifest.into(),
            test_manifest: test_manifest.into(),
            class_weights: None,
            augment: false,
            upsampling: Upsampling::Bilinear,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_backbone(mut self, backbone: &str) -> Result<Self> {
        self.backbone = backbone.to_string();
        self.validate()?;
        Ok(self)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        self.batch_size = batch_size;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        problems.extend(size_problem(self.input_size));
        if self.epochs == 0 {
            problems.push("epochs must be a positive integer".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be a positive integer".into());
        }
        problems.extend(self.model_problems());
        problems
    }

    fn model_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.num_classes != NUM_CLASSES {
            problems.push(format!(
                "num_classes is {}, the class map has {NUM_CLASSES}",
                self.num_classes
            ));
        }
        if BackboneSpec::preset(&self.backbone).is_none() {
            problems.push(format!(
                "unknown backbone `{}` (expected one of: {})",
                self.backbone,
                BackboneSpec::PRESETS.join(", ")
            ));
        }
        if let Some(weights) = &self.class_weights {
            if weights.len() != NUM_CLASSES {
                problems.push(format!(
                    "class_weights has {} entries, expected {NUM_CLASSES}",
                    weights.len()
                ));
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                problems.push("class_weights must be finite and non-negative".into());
            }
        }
        problems
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawRunConfig) -> Result<Self> {
        let mut problems = Vec::new();

        let architecture = match raw.architecture.as_deref() {
            None => {
                problems.push(
                    "architecture is required (one of: RAGNet, PSPNet, SegNet, UNet, FCN8, FCN32)"
                        .into(),
                );
                None
            }
            Some(name) => match name.parse::<Architecture>() {
                Ok(a) => Some(a),
                Err(e) => {
                    problems.push(e.to_string());
                    None
                }
            },
        };
        let input_size = match raw.input_size.as_deref() {
            Some([h, w]) if *h > 0 && *w > 0 => Some([*h as usize, *w as usize]),
            Some(other) => {
                problems.push(format!("input_size must be [height, width], got {other:?}"));
                None
            }
            None => {
                problems.push("input_size is required".into());
                None
            }
        };
        let epochs = match raw.epochs {
            Some(e) if e > 0 => Some(e as usize),
            Some(e) => {
                problems.push(format!("epochs must be a positive integer, got {e}"));
                None
            }
            None => {
                problems.push("epochs is required (there is no default)".into());
                None
            }
        };
        let batch_size = match raw.batch_size {
            None => Some(DEFAULT_BATCH_SIZE),
            Some(b) if b > 0 => Some(b as usize),
            Some(b) => {
                problems.push(format!("batch_size must be a positive integer, got {b}"));
                None
            }
        };
        let num_classes = match raw.num_classes {
            None => NUM_CLASSES,
            Some(n) => n.max(0) as usize,
        };
        match raw.optimizer.as_deref() {
            None | Some("ADADELTA") => {}
            Some(other) => problems.push(format!("optimizer `{other}` unsupported (ADADELTA only)")),
        }
        match raw.learning_rate_mode.as_deref() {
            None | Some("default") => {}
            Some(other) => {
                problems.push(format!("learning_rate_mode `{other}` unsupported (default only)"))
            }
        }
        if raw.train_manifest.is_none() {
            problems.push("train_manifest is required".into());
        }
        if raw.test_manifest.is_none() {
            problems.push("test_manifest is required".into());
        }

        let config = RunConfig {
            architecture: architecture.unwrap_or(Architecture::UNet),
            backbone: raw.backbone.unwrap_or_else(|| DEFAULT_BACKBONE.to_string()),
            input_size: input_size.unwrap_or([32, 32]),
            num_classes,
            optimizer: Optimizer::Adadelta,
            learning_rate_mode: LearningRateMode::Default,
            epochs: epochs.unwrap_or(1),
            batch_size: batch_size.unwrap_or(1),
            seed: raw.seed.unwrap_or(0),
            train_manifest: raw.train_manifest.unwrap_or_default(),
            test_manifest: raw.test_manifest.unwrap_or_default(),
            class_weights: raw.class_weights,
            augment: raw.augment.unwrap_or(false),
            upsampling: raw.upsampling.unwrap_or_default(),
        };
        if let Some(size) = input_size {
            problems.extend(size_problem(size));
        }
        problems.extend(config.model_problems());
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn size_problem([h, w]: [usize; 2]) -> Option<String> {
    (h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0).then(|| {
        format!("input_size {h}x{w}: both dimensions must be positive multiples of 32")
    })
}
