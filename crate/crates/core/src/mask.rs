//! Per-pixel ground truth and predictions.
//!
//! On disk a mask is an 8-bit grayscale PNG whose pixel values are class
//! indices (0..=5), not display intensities.

use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::classmap::{ClassMap, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskImage {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskViolation {
    EmptyDimensions { width: usize, height: usize },
    LengthMismatch { expected: usize, found: usize },
    /// `x`/`y` locate the first offending pixel in row-major order.
    InvalidLabel { label: u8, x: usize, y: usize, count: usize },
}

impl MaskImage {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} mask needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Ground truth of a healthy scan.
    pub fn background(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn is_all_background(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }

    /// Pixel count per class index; out-of-range labels are ignored.
    pub fn histogram(&self) -> [u64; NUM_CLASSES] {
        let mut counts = [0u64; NUM_CLASSES];
        for &l in &self.labels {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
        counts
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (y * self.height / height).min(self.height - 1);
            for x in 0..width {
                let sx = (x * self.width / width).min(self.width - 1);
                labels.push(self.labels[sy * self.width + sx]);
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            labels: img.into_raw(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.get(x as usize, y as usize)])
        });
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn validate_mask(mask: &MaskImage, cmap: &ClassMap) -> Vec<MaskViolation> {
    let mut violations = Vec::new();
    if mask.width == 0 || mask.height == 0 {
        violations.push(MaskViolation::EmptyDimensions {
            width: mask.width,
            height: mask.height,
        });
    }
    if mask.labels.len() != mask.width * mask.height {
        violations.push(MaskViolation::LengthMismatch {
            expected: mask.width * mask.height,
            found: mask.labels.len(),
        });
    }
    let mut first = None;
    let mut count = 0;
    for (i, &label) in mask.labels.iter().enumerate() {
        if !cmap.contains_index(label) {
            count += 1;
            first.get_or_insert((label, i));
        }
    }
    if let Some((label, i)) = first {
        violations.push(MaskViolation::InvalidLabel {
            label,
            x: i % mask.width.max(1),
            y: i / mask.width.max(1),
            count,
        });
    }
    violations
}
