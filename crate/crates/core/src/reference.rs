//! Published results, transcribed as fixtures for arithmetic checks and
//! for reference rows in reports.

use crate::classmap::LesionClass;
use crate::config::Architecture;
use crate::datasets::GroupId;
use crate::metrics::{ClassScore, MetricReport, Provenance};
use crate::transfer::{Pair, TransferCell, TransferMatrix, TABLE_IV_PAIRS};

use Architecture::{Fcn32, Fcn8, PspNet, RagNet, SegNet, UNet};

pub const PUBLISHED_AGGREGATION: &str = "published";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRow {
    pub architecture: Architecture,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
}

/// Pixel-level recall, precision and F-score on the combined datasets.
pub const TABLE_I: [PixelRow; 6] = [
    PixelRow { architecture: RagNet, tpr: 0.8547, ppv: 0.8606, f1: 0.8576 },
    PixelRow { architecture: PspNet, tpr: 0.7540, ppv: 0.9200, f1: 0.8287 },
    PixelRow { architecture: SegNet, tpr: 0.6388, ppv: 0.9342, f1: 0.7587 },
    PixelRow { architecture: UNet, tpr: 0.7736, ppv: 0.8842, f1: 0.8252 },
    PixelRow { architecture: Fcn8, tpr: 0.6238, ppv: 0.6165, f1: 0.6201 },
    PixelRow { architecture: Fcn32, tpr: 0.4755, ppv: 0.5611, f1: 0.5147 },
];

/// Column order of the per-class tables.
pub const CLASS_COLUMNS: [LesionClass; 5] = [
    LesionClass::Irf,
    LesionClass::Srf,
    LesionClass::Ca,
    LesionClass::He,
    LesionClass::Drusen,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRow {
    pub architecture: Architecture,
    /// In [`CLASS_COLUMNS`] order.
    pub values: [f64; 5],
    pub mean: f64,
}

pub const TABLE_II_DICE: [ClassRow; 6] = [
    ClassRow { architecture: RagNet, values: [0.846, 0.850, 0.941, 0.633, 0.840], mean: 0.822 },
    ClassRow { architecture: SegNet, values: [0.810, 0.610, 0.886, 0.373, 0.695], mean: 0.675 },
    ClassRow { architecture: PspNet, values: [0.843, 0.809, 0.944, 0.594, 0.735], mean: 0.785 },
    ClassRow { architecture: UNet, values: [0.816, 0.757, 0.878, 0.581, 0.864], mean: 0.779 },
    ClassRow { architecture: Fcn8, values: [0.681, 0.568, 0.761, 0.124, 0.410], mean: 0.509 },
    ClassRow { architecture: Fcn32, values: [0.651, 0.434, 0.638, 0.032, 0.243], mean: 0.400 },
];

pub const TABLE_III_IOU: [ClassRow; 6] = [
    ClassRow { architecture: RagNet, values: [0.733, 0.739, 0.890, 0.464, 0.725], mean: 0.710 },
    ClassRow { architecture: SegNet, values: [0.681, 0.439, 0.796, 0.229, 0.533], mean: 0.535 },
    ClassRow { architecture: PspNet, values: [0.728, 0.680, 0.895, 0.423, 0.581], mean: 0.661 },
    ClassRow { architecture: UNet, values: [0.689, 0.609, 0.783, 0.409, 0.761], mean: 0.650 },
    ClassRow { architecture: Fcn8, values: [0.517, 0.397, 0.615, 0.066, 0.257], mean: 0.370 },
    ClassRow { architecture: Fcn32, values: [0.482, 0.277, 0.468, 0.016, 0.138], mean: 0.276 },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRow {
    pub pair: Pair,
    /// Mean IoU in [`Architecture::ALL`] order (RN, PN, SN, UN, F-8, F-32).
    pub values: [f64; 6],
    /// Marked best (bold) and second best (blue) in the published table.
    pub best: Architecture,
    pub second: Architecture,
}

const fn row(pair: Pair, values: [f64; 6], second: Architecture) -> TransferRow {
    TransferRow { pair, values, best: RagNet, second }
}

pub const TABLE_IV: [TransferRow; 12] = [
    row(TABLE_IV_PAIRS[0], [0.624, 0.589, 0.414, 0.574, 0.281, 0.170], PspNet),
    row(TABLE_IV_PAIRS[1], [0.649, 0.601, 0.426, 0.612, 0.301, 0.194], UNet),
    row(TABLE_IV_PAIRS[2], [0.657, 0.615, 0.468, 0.604, 0.322, 0.225], PspNet),
    row(TABLE_IV_PAIRS[3], [0.663, 0.632, 0.472, 0.629, 0.329, 0.245], PspNet),
    row(TABLE_IV_PAIRS[4], [0.573, 0.542, 0.389, 0.534, 0.236, 0.144], PspNet),
    row(TABLE_IV_PAIRS[5], [0.554, 0.535, 0.374, 0.521, 0.213, 0.115], PspNet),
    row(TABLE_IV_PAIRS[6], [0.809, 0.752, 0.613, 0.734, 0.476, 0.342], PspNet),
    row(TABLE_IV_PAIRS[7], [0.794, 0.741, 0.598, 0.721, 0.445, 0.335], PspNet),
    row(TABLE_IV_PAIRS[8], [0.582, 0.534, 0.487, 0.525, 0.229, 0.136], PspNet),
    row(TABLE_IV_PAIRS[9], [0.571, 0.529, 0.479, 0.517, 0.214, 0.127], PspNet),
    row(TABLE_IV_PAIRS[10], [0.564, 0.513, 0.465, 0.524, 0.221, 0.152], UNet),
    row(TABLE_IV_PAIRS[11], [0.552, 0.507, 0.457, 0.512, 0.235, 0.178], UNet),
];

/// Relative-improvement statements of the results discussion, as
/// (a − b) / a in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementClaim {
    pub metric: &'static str,
    pub leader: Architecture,
    pub other: Architecture,
    pub percent: f64,
}

pub const IMPROVEMENT_CLAIMS: [ImprovementClaim; 6] = [
    ImprovementClaim { metric: "tpr", leader: RagNet, other: UNet, percent: 9.48 },
    ImprovementClaim { metric: "f1", leader: RagNet, other: PspNet, percent: 3.36 },
    ImprovementClaim { metric: "ppv", leader: SegNet, other: PspNet, percent: 1.52 },
    ImprovementClaim { metric: "mean_dice", leader: RagNet, other: PspNet, percent: 4.5 },
    ImprovementClaim { metric: "mean_dice", leader: RagNet, other: Fcn32, percent: 51.33 },
    ImprovementClaim { metric: "mean_iou", leader: RagNet, other: PspNet, percent: 6.9 },
];

/// TN rates on the healthy-only set quoted in the text.
pub const TN_RATE_REFERENCE: [(Architecture, f64); 2] = [(RagNet, 0.9999), (Fcn32, 0.9379)];

pub const PUBLISHED_TOTALS: PublishedTotals = PublishedTotals {
    fundus: 363,
    oct: 173_915,
    fundus_test: 297,
    oct_test: 59_593,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishedTotals {
    pub fundus: u64,
    pub oct: u64,
    pub fundus_test: u64,
    pub oct_test: u64,
}

fn class_value(rows: &[ClassRow; 6], arch: Architecture, class: LesionClass) -> Option<f64> {
    let r = rows.iter().find(|r| r.architecture == arch)?;
    let i = CLASS_COLUMNS.iter().position(|c| *c == class)?;
    Some(r.values[i])
}

/// One report per architecture combining Tables I–III, in Table I order.
pub fn published_reports() -> Vec<MetricReport> {
    TABLE_I
        .iter()
        .map(|p| {
            let arch = p.architecture;
            let per_class = LesionClass::ALL
                .into_iter()
                .map(|class| ClassScore {
                    class,
                    dice: class_value(&TABLE_II_DICE, arch, class),
                    iou: class_value(&TABLE_III_IOU, arch, class),
                    counts: None,
                })
                .collect();
            let mean = |rows: &[ClassRow; 6]| rows.iter().find(|r| r.architecture == arch).map(|r| r.mean);
            MetricReport {
                per_class,
                mean_dice: mean(&TABLE_II_DICE),
                mean_iou: mean(&TABLE_III_IOU),
                micro_tpr: Some(p.tpr),
                micro_ppv: Some(p.ppv),
                micro_f1: Some(p.f1),
                tn_rate: TN_RATE_REFERENCE.iter().find(|(a, _)| *a == arch).map(|(_, v)| *v),
                provenance: Provenance {
                    label: arch.display_name().to_string(),
                    architecture: Some(arch.as_str().to_string()),
                    config_digest: None,
                    aggregation: PUBLISHED_AGGREGATION.to_string(),
                    pixel_metrics: "unstated".to_string(),
                },
            }
        })
        .collect()
}

/// The published transferability table as a complete matrix. Cell reports
/// carry only the mean IoU.
pub fn published_matrix() -> TransferMatrix {
    let mut cells = Vec::with_capacity(72);
    for r in &TABLE_IV {
        for (arch, &v) in Architecture::ALL.iter().zip(&r.values) {
            cells.push(TransferCell {
                train_group: r.pair.train,
                test_group: r.pair.test,
                architecture: *arch,
                mean_iou: v,
                seed: 0,
                config_digest: String::new(),
                report: MetricReport {
                    per_class: Vec::new(),
                    mean_dice: None,
                    mean_iou: Some(v),
                    micro_tpr: None,
                    micro_ppv: None,
                    micro_f1: None,
                    tn_rate: None,
                    provenance: Provenance {
                        label: format!("{} {}", r.pair.label(), arch.display_name()),
                        architecture: Some(arch.as_str().to_string()),
                        config_digest: None,
                        aggregation: PUBLISHED_AGGREGATION.to_string(),
                        pixel_metrics: "unstated".to_string(),
                    },
                },
            });
        }
    }
    TransferMatrix::new(TABLE_IV_PAIRS.to_vec(), Architecture::ALL.to_vec(), cells)
}

/// Table IV row for `pair`.
pub fn transfer_row(pair: Pair) -> Option<&'static TransferRow> {
    TABLE_IV.iter().find(|r| r.pair == pair)
}

/// Shorthand for the group pair `train → test`.
pub fn pair(train: GroupId, test: GroupId) -> Pair {
    Pair::new(train, test)
}
