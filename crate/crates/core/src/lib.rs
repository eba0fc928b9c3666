//! Retinal lesion segmentation benchmark toolkit.

pub mod classmap;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod engine;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod models;
pub mod record;
pub mod reference;
pub mod report;
pub mod transfer;

pub use error::{Error, Result};
