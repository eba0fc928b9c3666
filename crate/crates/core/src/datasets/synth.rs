//! Deterministic synthetic scans with exact lesion masks.
//!
//! OCT scans are grayscale with horizontal layer bands; fundus scans are RGB
//! with a reddish radial gradient. Each lesion class has its own intensity
//! (OCT) or color (fundus), so the fixtures are learnable by any of the
//! architectures. Scan `i` carries one elliptical blob for each of the
//! lesion classes `2i mod 5` and `2i + 1 mod 5` (offset past background),
//! so three scans already cover all five classes.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::DatasetManifest;
use crate::classmap::LesionClass;
use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::record::{DatasetId, Modality, ScanRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPolicy {
    AllTrain,
    AllTest,
    /// Every `n`-th scan (1-based) goes to test, the rest to train.
    EveryNthTest(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_scans: usize,
    /// (width, height)
    pub size: (usize, usize),
    pub seed: u64,
    pub dataset: DatasetId,
    pub healthy: bool,
    pub split: SplitPolicy,
    pub id_prefix: String,
}

impl SynthSpec {
    pub fn new(n_scans: usize, size: (usize, usize), seed: u64) -> Self {
        SynthSpec {
            n_scans,
            size,
            seed,
            dataset: DatasetId::Synthetic,
            healthy: false,
            split: SplitPolicy::AllTrain,
            id_prefix: "syn".into(),
        }
    }

    pub fn dataset(mut self, dataset: DatasetId) -> Self {
        self.dataset = dataset;
        self
    }

    pub fn healthy(mut self, healthy: bool) -> Self {
        self.healthy = healthy;
        self
    }

    pub fn split(mut self, split: SplitPolicy) -> Self {
        self.split = split;
        self
    }

    pub fn id_prefix(mut self, prefix: &str) -> Self {
        self.id_prefix = prefix.to_string();
        self
    }
}

/// Raw pixels of one generated scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScan {
    pub modality: Modality,
    /// Row-major RGB, 3 bytes per pixel (OCT scans have equal channels).
    pub rgb: Vec<u8>,
    pub mask: MaskImage,
}

const OCT_LESION_GRAY: [u8; 6] = [0, 15, 50, 250, 205, 175];
const FUNDUS_LESION_RGB: [[u8; 3]; 6] = [
    [0, 0, 0],
    [70, 25, 120],
    [235, 210, 40],
    [255, 255, 190],
    [250, 170, 215],
    [90, 170, 80],
];

fn scan_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Lesion classes drawn into scan `index`.
pub fn lesions_for_scan(index: usize) -> [LesionClass; 2] {
    let pick = |k: usize| LesionClass::LESIONS[k % 5];
    [pick(2 * index), pick(2 * index + 1)]
}

pub fn modality_for_scan(index: usize) -> Modality {
    if index.is_multiple_of(2) {
        Modality::Oct
    } else {
        Modality::Fundus
    }
}

pub fn generate_scan(spec: &SynthSpec, index: usize) -> SynthScan {
    let (w, h) = spec.size;
    let mut rng = scan_rng(spec.seed, index);
    let modality = modality_for_scan(index);
    let mut rgb = vec![0u8; w * h * 3];
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for y in 0..h {
        for x in 0..w {
            let noise: i32 = rng.random_range(-6..=6);
            let px = match modality {
                Modality::Oct => {
                    let band = (y as f64 / h as f64 * 9.0 + phase).sin();
                    let g = (115.0 + 30.0 * band) as i32 + noise;
                    let g = g.clamp(0, 255) as u8;
                    [g, g, g]
                }
                Modality::Fundus => {
                    let dx = x as f64 / w as f64 - 0.5;
                    let dy = y as f64 / h as f64 - 0.5;
                    let r = (dx * dx + dy * dy).sqrt();
                    let shade = 1.0 - 0.6 * r;
                    let c = |v: f64| ((v * shade) as i32 + noise).clamp(0, 255) as u8;
                    [c(200.0), c(95.0), c(45.0)]
                }
            };
            rgb[(y * w + x) * 3..][..3].copy_from_slice(&px);
        }
    }
    let mut mask = MaskImage::background(w, h);
    if !spec.healthy {
        // two distinct quadrants of a 2x2 layout
        let first: usize = rng.random_range(0..4);
        let second = (first + rng.random_range(1..4)) % 4;
        for (class, slot) in lesions_for_scan(index).into_iter().zip([first, second]) {
            let cx = (slot % 2) as f64 * w as f64 / 2.0 + w as f64 / 4.0
                + rng.random_range(-(w as f64) / 16.0..=w as f64 / 16.0);
            let cy = (slot / 2) as f64 * h as f64 / 2.0 + h as f64 / 4.0
                + rng.random_range(-(h as f64) / 16.0..=h as f64 / 16.0);
            let rx = rng.random_range(w as f64 / 8.0..=w as f64 / 5.0);
            let ry = rng.random_range(h as f64 / 8.0..=h as f64 / 5.0);
            let k = class.index() as usize;
            for y in 0..h {
                for x in 0..w {
                    let u = (x as f64 + 0.5 - cx) / rx;
                    let v = (y as f64 + 0.5 - cy) / ry;
                    if u * u + v * v <= 1.0 {
                        mask.set(x, y, class.index());
                        let px = &mut rgb[(y * w + x) * 3..][..3];
                        let jitter = |base: u8| {
                            (base as i32 + (px[0] as i32 % 5) - 2).clamp(0, 255) as u8
                        };
                        let color = match modality {
                            Modality::Oct => [OCT_LESION_GRAY[k]; 3],
                            Modality::Fundus => FUNDUS_LESION_RGB[k],
                        };
                        let c = [jitter(color[0]), jitter(color[1]), jitter(color[2])];
                        px.copy_from_slice(&c);
                    }
                }
            }
        }
    }
    SynthScan {
        modality,
        rgb,
        mask,
    }
}

fn split_for(policy: SplitPolicy, index: usize) -> Split {
    match policy {
        SplitPolicy::AllTrain => Split::Train,
        SplitPolicy::AllTest => Split::Test,
        SplitPolicy::EveryNthTest(n) if n > 0 && (index + 1).is_multiple_of(n) => Split::Test,
        SplitPolicy::EveryNthTest(_) => Split::Train,
    }
}

fn save_scan(scan: &SynthScan, path: &Path) -> Result<()> {
    let (w, h) = scan.mask.dims();
    let result = match scan.modality {
        Modality::Oct => GrayImage::from_fn(w as u32, h as u32, |x, y| {
            Luma([scan.rgb[(y as usize * w + x as usize) * 3]])
        })
        .save(path),
        Modality::Fundus => RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let i = (y as usize * w + x as usize) * 3;
            Rgb([scan.rgb[i], scan.rgb[i + 1], scan.rgb[i + 2]])
        })
        .save(path),
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub const SYNTH_MANIFEST_NAME: &str = "manifest.txt";

/// Writes `spec.n_scans` images (and masks, unless healthy) plus
/// `manifest.txt` into `out_dir`. Same spec ⇒ byte-identical files.
pub fn synth_fixture(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.n_scans == 0 {
        return Err(Error::InvalidConfig(vec!["n_scans must be at least 1".into()]));
    }
    if spec.size.0 == 0 || spec.size.1 == 0 {
        return Err(Error::InvalidConfig(vec!["fixture size must be positive".into()]));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::with_capacity(spec.n_scans);
    for i in 0..spec.n_scans {
        let scan = generate_scan(spec, i);
        let scan_id = format!("{}-{i:04}", spec.id_prefix);
        let image_ref = PathBuf::from(format!("{scan_id}.png"));
        save_scan(&scan, &out_dir.join(&image_ref))?;
        let mask_ref = if spec.healthy {
            None
        } else {
            let m = PathBuf::from(format!("{scan_id}_mask.png"));
            scan.mask.save(&out_dir.join(&m))?;
            Some(m)
        };
        let pathology = if spec.healthy {
            "normal".to_string()
        } else {
            lesions_for_scan(i)
                .iter()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join("+")
        };
        records.push(ScanRecord {
            scan_id,
            dataset_id: spec.dataset,
            modality: scan.modality,
            image_ref,
            mask_ref,
            split: split_for(spec.split, i),
            pathology,
        });
    }
    let manifest = DatasetManifest::from_records(records, out_dir)?;
    manifest.write(&out_dir.join(SYNTH_MANIFEST_NAME))?;
    Ok(manifest)
}
