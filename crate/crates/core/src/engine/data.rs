//! Image loading and preprocessing.
//!
//! Pixels are scaled to [0, 1] and standardized as (x − 0.5) / 0.25.
//! Grayscale (OCT) images are replicated to three channels. Images are
//! resized bilinearly, masks by nearest neighbour.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::RgbImage;

use crate::datasets::DatasetManifest;
use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::models::ops;
use crate::record::ScanRecord;

pub const PIXEL_MEAN: f64 = 0.5;
pub const PIXEL_STD: f64 = 0.25;

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

/// (3, H, W) f32 network input for an image resized to `input_size` (H, W).
pub fn image_tensor(rgb: &RgbImage, input_size: [usize; 2]) -> Result<Tensor> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let bytes = Tensor::from_vec(rgb.as_raw().clone(), (h, w, 3), &Device::Cpu)?;
    let x = bytes
        .to_dtype(DType::F32)?
        .permute((2, 0, 1))?
        .contiguous()?
        .unsqueeze(0)?;
    let x = ops::resize_bilinear(&(x / 255.0)?, input_size[0], input_size[1])?;
    Ok(((x - PIXEL_MEAN)? / PIXEL_STD)?.squeeze(0)?)
}

/// Ground truth at the image's own resolution; healthy scans without a mask
/// file get an all-background mask.
pub fn load_target(manifest: &DatasetManifest, record: &ScanRecord, dims: (usize, usize)) -> Result<MaskImage> {
    match manifest.mask_path(record) {
        None => Ok(MaskImage::background(dims.0, dims.1)),
        Some(path) => {
            let mask = MaskImage::load(&path)?;
            if mask.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: mask.dims(),
                });
            }
            Ok(mask)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedScan {
    /// (3, H, W) preprocessed input.
    pub image: Tensor,
    /// Ground truth at the original resolution.
    pub mask: MaskImage,
}

impl LoadedScan {
    /// Ground truth resized to the network input.
    pub fn target(&self) -> MaskImage {
        let (_, h, w) = self.image.dims3().expect("image is (3, H, W)");
        self.mask.resize_nearest(w, h)
    }
}

pub fn load_scan(manifest: &DatasetManifest, record: &ScanRecord, input_size: [usize; 2]) -> Result<LoadedScan> {
    let rgb = load_rgb(&manifest.image_path(record))?;
    let dims = (rgb.width() as usize, rgb.height() as usize);
    Ok(LoadedScan {
        image: image_tensor(&rgb, input_size)?,
        mask: load_target(manifest, record, dims)?,
    })
}

/// Stacks images to (N, 3, H, W) and input-size targets to (N, H, W) u32.
pub fn collate(scans: &[LoadedScan]) -> Result<(Tensor, Tensor)> {
    let images: Vec<&Tensor> = scans.iter().map(|s| &s.image).collect();
    let x = Tensor::stack(&images, 0)?;
    let targets = scans
        .iter()
        .map(|s| {
            let t = s.target();
            let labels: Vec<u32> = t.labels().iter().map(|&l| u32::from(l)).collect();
            Ok(Tensor::from_vec(labels, (t.height(), t.width()), &Device::Cpu)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((x, Tensor::stack(&targets, 0)?))
}

/// Mirrors images along W.
pub fn flip_horizontal(x: &Tensor) -> Result<Tensor> {
    let w = x.dim(candle_core::D::Minus1)?;
    let idx = Tensor::from_vec((0..w as u32).rev().collect::<Vec<_>>(), w, x.device())?;
    Ok(x.index_select(&idx, x.rank() - 1)?)
}
