use std::path::Path;

use candle_core::{DType, Tensor};

use super::data;
use crate::datasets::DatasetManifest;
use crate::error::Result;
use crate::mask::MaskImage;
use crate::metrics::{ConfusionAccumulator, MetricReport, Provenance, MICRO_LABEL, POOLED_AGGREGATION};
use crate::models::{ops, SegmentationModel};

/// Label grids of an (N, C, H, W) score tensor.
pub fn scores_to_masks(scores: &Tensor) -> Result<Vec<MaskImage>> {
    let (n, _, h, w) = scores.dims4()?;
    let labels = ops::argmax_channels(scores)?.to_dtype(DType::U32)?;
    (0..n)
        .map(|i| {
            let v: Vec<u8> = labels.get(i)?.flatten_all()?.to_vec1::<u32>()?.into_iter().map(|l| l as u8).collect();
            MaskImage::new(w, h, v)
        })
        .collect()
}

/// Predicted labels for a preprocessed (3, H, W) image, resized to
/// `original` (width, height).
pub fn predict_tensor(model: &SegmentationModel, image: &Tensor, original: (usize, usize)) -> Result<MaskImage> {
    let scores = model.forward(&image.unsqueeze(0)?)?;
    let mask = scores_to_masks(&scores)?.remove(0);
    Ok(mask.resize_nearest(original.0, original.1))
}

/// Loads `image_path`, runs the model and returns a mask at the image's
/// own resolution.
pub fn predict(model: &SegmentationModel, image_path: &Path) -> Result<MaskImage> {
    let rgb = data::load_rgb(image_path)?;
    let x = data::image_tensor(&rgb, model.spec().input_size)?;
    predict_tensor(model, &x, (rgb.width() as usize, rgb.height() as usize))
}

/// Pooled confusion counts of `model` over every record of `manifest`,
/// compared at original resolution.
pub fn accumulate_predictions(model: &SegmentationModel, manifest: &DatasetManifest) -> Result<ConfusionAccumulator> {
    let mut acc = ConfusionAccumulator::new();
    for record in manifest.records() {
        let scan = data::load_scan(manifest, record, model.spec().input_size)?;
        let pred = predict_tensor(model, &scan.image, scan.mask.dims())?;
        acc.accumulate(&scan.mask, &pred)?;
    }
    Ok(acc)
}

pub fn provenance_for(model: &SegmentationModel, label: &str, config_digest: Option<String>) -> Provenance {
    Provenance {
        label: label.to_string(),
        architecture: Some(model.spec().architecture.as_str().to_string()),
        config_digest,
        aggregation: POOLED_AGGREGATION.to_string(),
        pixel_metrics: MICRO_LABEL.to_string(),
    }
}

/// Table I–III metrics of `model` on `manifest`.
pub fn evaluate(model: &SegmentationModel, manifest: &DatasetManifest, label: &str) -> Result<MetricReport> {
    let acc = accumulate_predictions(model, manifest)?;
    Ok(MetricReport::from_accumulator(&acc, provenance_for(model, label, None), false))
}
