use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}:{line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("{context}:{line}: duplicate scan_id `{scan_id}`")]
    DuplicateScanId {
        context: String,
        line: usize,
        scan_id: String,
    },

    #[error("{context}:{line}: unknown dataset `{value}`")]
    UnknownDataset {
        context: String,
        line: usize,
        value: String,
    },

    #[error("empty manifest")]
    EmptyManifest,

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("unsupported architecture `{0}` (expected one of: RAGNet, PSPNet, SegNet, UNet, FCN8, FCN32)")]
    UnsupportedArchitecture(String),

    #[error("input size {height}x{width} is not divisible by 32")]
    SizeNotDivisible { height: usize, width: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid class label {label} at ({x}, {y})")]
    InvalidLabel { label: u8, x: usize, y: usize },

    #[error("pooling index {index} outside its 2x2 window")]
    IndexOutOfWindow { index: u32 },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("relative improvement needs a positive baseline, got {0}")]
    NonPositiveBaseline(f64),

    #[error("every lesion class is empty; mean is undefined")]
    AllClassesEmpty,

    #[error("dataset group {0} has no records for the requested split")]
    MissingGroup(String),

    #[error("transfer row {0} is incomplete")]
    IncompleteRow(String),

    #[error("scan `{0}` has lesion labels in its ground truth; the healthy-set experiment requires healthy scans only")]
    NonHealthyScan(String),

    #[error("report `{report}` has no value for metric `{metric}`")]
    MissingMetric { report: String, metric: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable identifier printed by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DuplicateScanId { .. } => "duplicate-id",
            Error::UnknownDataset { .. } => "unknown-dataset",
            Error::EmptyManifest => "empty-manifest",
            Error::InvalidConfig(_) => "invalid-config",
            Error::UnsupportedArchitecture(_) => "unsupported-architecture",
            Error::SizeNotDivisible { .. } => "size-not-divisible",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::InvalidLabel { .. } => "invalid-label",
            Error::IndexOutOfWindow { .. } => "index-out-of-window",
            Error::NonFiniteGradient(_) => "non-finite-gradient",
            Error::Divergence { .. } => "divergence",
            Error::NonPositiveBaseline(_) => "non-positive-baseline",
            Error::AllClassesEmpty => "all-classes-empty",
            Error::MissingGroup(_) => "missing-group",
            Error::IncompleteRow(_) => "incomplete-row",
            Error::NonHealthyScan(_) => "non-healthy-scan",
            Error::MissingMetric { .. } => "missing-metric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Cell { source, .. } => source.code(),
            Error::Image { .. } => "image",
            Error::Tensor(_) => "tensor",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }

    /// True for errors caused by bad inputs rather than failures while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::DuplicateScanId { .. }
            | Error::UnknownDataset { .. }
            | Error::EmptyManifest
            | Error::InvalidConfig(_)
            | Error::UnsupportedArchitecture(_)
            | Error::SizeNotDivisible { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidLabel { .. }
            | Error::NonHealthyScan(_)
            | Error::MissingGroup(_)
            | Error::Toml(_) => true,
            Error::Cell { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
