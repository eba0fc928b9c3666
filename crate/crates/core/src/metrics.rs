//! Pixel-overlap metrics.
//!
//! Every experiment owns one [`ConfusionAccumulator`]; pixel counts are
//! pooled over the whole test set and only divided at the end. Ratios whose
//! denominator is zero are reported as `None` ("defined-empty") and are left
//! out of means.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::classmap::{LesionClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::mask::MaskImage;

/// One-vs-rest pixel tallies for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ClassCounts {
    type Output = ClassCounts;

    fn add(self, rhs: Self) -> Self {
        ClassCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionAccumulator {
    per_class: [ClassCounts; NUM_CLASSES],
    total_pixels: u64,
}

impl ConfusionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self, class: LesionClass) -> ClassCounts {
        self.per_class[class.index() as usize]
    }

    pub fn per_class(&self) -> &[ClassCounts; NUM_CLASSES] {
        &self.per_class
    }

    pub fn total_pixels(&self) -> u64 {
        self.total_pixels
    }

    pub fn is_empty(&self) -> bool {
        self.total_pixels == 0
    }

    /// Adds the pixels of one (ground truth, prediction) pair.
    pub fn accumulate(&mut self, gt: &MaskImage, pred: &MaskImage) -> Result<()> {
        if gt.dims() != pred.dims() {
            return Err(Error::DimensionMismatch {
                expected: gt.dims(),
                found: pred.dims(),
            });
        }
        let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (i, (&g, &p)) in gt.labels().iter().zip(pred.labels()).enumerate() {
            if g as usize >= NUM_CLASSES || p as usize >= NUM_CLASSES {
                let label = if g as usize >= NUM_CLASSES { g } else { p };
                return Err(Error::InvalidLabel {
                    label,
                    x: i % gt.width(),
                    y: i / gt.width(),
                });
            }
            confusion[g as usize][p as usize] += 1;
        }
        let n = gt.labels().len() as u64;
        for c in 0..NUM_CLASSES {
            let tp = confusion[c][c];
            let gt_c: u64 = confusion[c].iter().sum();
            let pred_c: u64 = confusion.iter().map(|row| row[c]).sum();
            let counts = ClassCounts {
                tp,
                fp: pred_c - tp,
                fn_: gt_c - tp,
                tn: n + tp - gt_c - pred_c,
            };
            self.per_class[c] = self.per_class[c] + counts;
        }
        self.total_pixels += n;
        Ok(())
    }

    pub fn accumulated(mut self, gt: &MaskImage, pred: &MaskImage) -> Result<Self> {
        self.accumulate(gt, pred)?;
        Ok(self)
    }

    pub fn merge(&self, other: &Self) -> Self {
        *self + *other
    }
}

impl Add for ConfusionAccumulator {
    type Output = ConfusionAccumulator;

    fn add(self, rhs: Self) -> Self {
        let mut per_class = self.per_class;
        for (a, b) in per_class.iter_mut().zip(rhs.per_class) {
            *a = *a + b;
        }
        ConfusionAccumulator {
            per_class,
            total_pixels: self.total_pixels + rhs.total_pixels,
        }
    }
}

impl AddAssign for ConfusionAccumulator {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for ConfusionAccumulator {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

/// 2·TP / (2·TP + FP + FN).
pub fn dice(acc: &ConfusionAccumulator, class: LesionClass) -> Option<f64> {
    let c = acc.counts(class);
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// TP / (TP + FP + FN).
pub fn iou(acc: &ConfusionAccumulator, class: LesionClass) -> Option<f64> {
    let c = acc.counts(class);
    ratio(c.tp, c.tp + c.fp + c.fn_)
}

/// Mean of the defined values; `None` if there are none.
pub fn mean_defined<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean over the five lesion classes of a per-class vector indexed by class.
/// Background and defined-empty entries are skipped.
pub fn mean_over_lesions(per_class: &[Option<f64>; NUM_CLASSES]) -> Result<f64> {
    mean_defined(per_class[1..].iter().copied()).ok_or(Error::AllClassesEmpty)
}

/// Pooled lesion-pixel recall, precision and F-score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroMetrics {
    pub tpr: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
}

pub fn f1_from_rates(tpr: f64, ppv: f64) -> Option<f64> {
    let den = tpr + ppv;
    (den != 0.0).then(|| 2.0 * tpr * ppv / den)
}

/// Sums TP/FN/FP over classes 1..=5, one-vs-rest: a lesion pixel predicted
/// as another lesion counts as FN for its own class and FP for the predicted one.
pub fn micro_pixel_metrics(acc: &ConfusionAccumulator) -> MicroMetrics {
    let pooled = LesionClass::LESIONS
        .into_iter()
        .map(|c| acc.counts(c))
        .fold(ClassCounts::default(), Add::add);
    let tpr = ratio(pooled.tp, pooled.tp + pooled.fn_);
    let ppv = ratio(pooled.tp, pooled.tp + pooled.fp);
    let f1 = match (tpr, ppv) {
        (Some(r), Some(p)) => f1_from_rates(r, p),
        _ => None,
    };
    MicroMetrics { tpr, ppv, f1 }
}

/// TN / (TN + FP) where TN counts background pixels predicted background and
/// FP counts background pixels predicted as any lesion.
pub fn tn_rate(acc: &ConfusionAccumulator) -> Option<f64> {
    let bg = acc.counts(LesionClass::Background);
    ratio(bg.tp, bg.tp + bg.fn_)
}

/// (a − b) / a: how far `a` leads `b`, relative to `a`.
pub fn relative_improvement(a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || a <= 0.0 {
        return Err(Error::NonPositiveBaseline(a));
    }
    Ok((a - b) / a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: LesionClass,
    pub dice: Option<f64>,
    pub iou: Option<f64>,
    /// Absent for reports transcribed from published tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<ClassCounts>,
}

/// Where a report's numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    /// "pooled-pixels" for computed reports, "published" for transcriptions.
    pub aggregation: String,
    /// "micro (one-vs-rest, lesion classes pooled)" for computed reports.
    pub pixel_metrics: String,
}

pub const POOLED_AGGREGATION: &str = "pooled-pixels";
pub const MICRO_LABEL: &str = "micro (one-vs-rest, lesion classes pooled)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassScore>,
    pub mean_dice: Option<f64>,
    pub mean_iou: Option<f64>,
    pub micro_tpr: Option<f64>,
    pub micro_ppv: Option<f64>,
    pub micro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tn_rate: Option<f64>,
    pub provenance: Provenance,
}

impl MetricReport {
    /// Scores every class of `acc`. `tn_rate` is filled only when asked for,
    /// since it is meaningful on healthy-only ground truth.
    pub fn from_accumulator(
        acc: &ConfusionAccumulator,
        provenance: Provenance,
        with_tn_rate: bool,
    ) -> Self {
        let per_class: Vec<ClassScore> = LesionClass::ALL
            .into_iter()
            .map(|class| ClassScore {
                class,
                dice: dice(acc, class),
                iou: iou(acc, class),
                counts: Some(acc.counts(class)),
            })
            .collect();
        let micro = micro_pixel_metrics(acc);
        MetricReport {
            mean_dice: mean_defined(LesionClass::LESIONS.into_iter().map(|c| dice(acc, c))),
            mean_iou: mean_defined(LesionClass::LESIONS.into_iter().map(|c| iou(acc, c))),
            per_class,
            micro_tpr: micro.tpr,
            micro_ppv: micro.ppv,
            micro_f1: micro.f1,
            tn_rate: if with_tn_rate { tn_rate(acc) } else { None },
            provenance,
        }
    }

    pub fn class(&self, class: LesionClass) -> Option<&ClassScore> {
        self.per_class.iter().find(|s| s.class == class)
    }

    /// Named scalar lookup used by comparisons: `tpr`, `ppv`, `f1`,
    /// `mean_dice`, `mean_iou`, `tn_rate`, or `dice:<class>` / `iou:<class>`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "tpr" => self.micro_tpr,
            "ppv" => self.micro_ppv,
            "f1" => self.micro_f1,
            "mean_dice" => self.mean_dice,
            "mean_iou" => self.mean_iou,
            "tn_rate" => self.tn_rate,
            other => {
                let (kind, class) = other.split_once(':')?;
                let class: LesionClass = class.parse().ok()?;
                let score = self.class(class)?;
                match kind {
                    "dice" => score.dice,
                    "iou" => score.iou,
                    _ => None,
                }
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.provenance.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: usize, labels: &[u8]) -> MaskImage {
        MaskImage::new(w, labels.len() / w, labels.to_vec()).unwrap()
    }

    /// Per-pixel reference counting, independent of the confusion matrix path.
    fn oracle(pairs: &[(&MaskImage, &MaskImage)], c: u8) -> ClassCounts {
        let mut k = ClassCounts::default();
        for (gt, pred) in pairs {
            for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
                match (g == c, p == c) {
                    (true, true) => k.tp += 1,
                    (false, true) => k.fp += 1,
                    (true, false) => k.fn_ += 1,
                    (false, false) => k.tn += 1,
                }
            }
        }
        k
    }

    #[test]
    fn hand_counted_two_by_two() {
        let gt = mask(2, &[1, 1, 0, 0]);
        let pred = mask(2, &[1, 0, 0, 0]);
        let acc = ConfusionAccumulator::new().accumulated(&gt, &pred).unwrap();
        assert_eq!(
            acc.counts(LesionClass::Irf),
            ClassCounts {
                tp: 1,
                fp: 0,
                fn_: 1,
                tn: 2
            }
        );
    }

    #[test]
    fn identity_prediction_has_no_errors() {
        let gt = mask(3, &[0, 1, 2, 3, 4, 5, 5, 4, 0]);
        let acc = ConfusionAccumulator::new().accumulated(&gt, &gt).unwrap();
        for c in LesionClass::ALL {
            assert_eq!(acc.counts(c).fp, 0);
            assert_eq!(acc.counts(c).fn_, 0);
        }
        assert_eq!(micro_pixel_metrics(&acc).f1, Some(1.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = ConfusionAccumulator::new()
            .accumulated(&MaskImage::background(2, 2), &MaskImage::background(3, 2))
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    fn with_counts(class: LesionClass, counts: ClassCounts) -> ConfusionAccumulator {
        let mut acc = ConfusionAccumulator::new();
        acc.per_class[class.index() as usize] = counts;
        acc.total_pixels = counts.total();
        acc
    }

    #[test]
    fn dice_and_iou_formulas() {
        let acc = with_counts(
            LesionClass::Srf,
            ClassCounts {
                tp: 2,
                fp: 1,
                fn_: 2,
                tn: 5,
            },
        );
        assert!((dice(&acc, LesionClass::Srf).unwrap() - 4.0 / 7.0).abs() < 1e-15);
        assert!((iou(&acc, LesionClass::Srf).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(dice(&acc, LesionClass::Ca), None);
        assert_eq!(iou(&acc, LesionClass::Ca), None);
    }

    #[test]
    fn means_skip_background_and_empty_classes() {
        let mut v = [None; NUM_CLASSES];
        v[0] = Some(0.0);
        v[1] = Some(0.5);
        v[4] = Some(1.0);
        assert_eq!(mean_over_lesions(&v).unwrap(), 0.75);
        assert!(matches!(
            mean_over_lesions(&[Some(1.0), None, None, None, None, None]),
            Err(Error::AllClassesEmpty)
        ));
        let same = [None, Some(0.3), Some(0.3), Some(0.3), Some(0.3), Some(0.3)];
        assert!((mean_over_lesions(&same).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tn_rate_hand_count() {
        let gt = MaskImage::background(10, 10);
        let mut pred = MaskImage::background(10, 10);
        for i in 0..7 {
            pred.set(i, i, 1 + (i % 5) as u8);
        }
        let acc = ConfusionAccumulator::new().accumulated(&gt, &pred).unwrap();
        assert_eq!(tn_rate(&acc), Some(0.93));
        let all_lesion = MaskImage::new(10, 10, vec![2; 100]).unwrap();
        let acc = ConfusionAccumulator::new().accumulated(&gt, &all_lesion).unwrap();
        assert_eq!(tn_rate(&acc), Some(0.0));
        let acc = ConfusionAccumulator::new().accumulated(&gt, &gt).unwrap();
        assert_eq!(tn_rate(&acc), Some(1.0));
    }

    #[test]
    fn relative_improvement_convention() {
        assert!((relative_improvement(0.822, 0.785).unwrap() - 0.0450).abs() < 5e-5);
        assert!((relative_improvement(0.822, 0.400).unwrap() - 0.5133).abs() < 5e-4);
        assert!((relative_improvement(0.9342, 0.9200).unwrap() - 0.0152).abs() < 5e-5);
        assert_eq!(relative_improvement(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(
            relative_improvement(0.0, 0.1),
            Err(Error::NonPositiveBaseline(_))
        ));
    }

    #[test]
    fn f1_from_published_rates() {
        let f1 = f1_from_rates(0.8547, 0.8606).unwrap();
        assert!((f1 - 0.8576).abs() < 1e-4);
    }

    #[test]
    fn report_metric_lookup() {
        let gt = mask(2, &[1, 1, 0, 3]);
        let pred = mask(2, &[1, 0, 0, 3]);
        let acc = ConfusionAccumulator::new().accumulated(&gt, &pred).unwrap();
        let prov = Provenance {
            label: "t".into(),
            architecture: None,
            config_digest: None,
            aggregation: POOLED_AGGREGATION.into(),
            pixel_metrics: MICRO_LABEL.into(),
        };
        let report = MetricReport::from_accumulator(&acc, prov, false);
        assert_eq!(report.metric("dice:HE"), Some(1.0));
        assert_eq!(report.metric("iou:IRF"), Some(0.5));
        assert_eq!(report.metric("tn_rate"), None);
        assert_eq!(report.mean_dice, Some((2.0 / 3.0 + 1.0) / 2.0));
    }

    fn arb_pair() -> impl Strategy<Value = (MaskImage, MaskImage)> {
        (1usize..=8, 1usize..=8).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(0u8..6, w * h),
                proptest::collection::vec(0u8..6, w * h),
            )
                .prop_map(move |(a, b)| {
                    (
                        MaskImage::new(w, h, a).unwrap(),
                        MaskImage::new(w, h, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn counts_match_oracle((gt, pred) in arb_pair()) {
            let acc = ConfusionAccumulator::new().accumulated(&gt, &pred).unwrap();
            for c in LesionClass::ALL {
                let k = acc.counts(c);
                prop_assert_eq!(k, oracle(&[(&gt, &pred)], c.index()));
                prop_assert_eq!(k.total(), acc.total_pixels());
            }
        }

        #[test]
        fn dice_iou_identity((gt, pred) in arb_pair()) {
            let acc = ConfusionAccumulator::new().accumulated(&gt, &pred).unwrap();
            for c in LesionClass::ALL {
                match (dice(&acc, c), iou(&acc, c)) {
                    (Some(d), Some(j)) => {
                        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
                        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&j));
                    }
                    (None, None) => {}
                    other => prop_assert!(false, "inconsistent emptiness {:?}", other),
                }
            }
        }

        #[test]
        fn merge_is_partition_invariant(pairs in proptest::collection::vec(arb_pair(), 1..6), cut in 0usize..6) {
            let cut = cut.min(pairs.len());
            let whole = pairs.iter().try_fold(ConfusionAccumulator::new(), |a, (g, p)| a.accumulated(g, p)).unwrap();
            let left = pairs[..cut].iter().try_fold(ConfusionAccumulator::new(), |a, (g, p)| a.accumulated(g, p)).unwrap();
            let right = pairs[cut..].iter().try_fold(ConfusionAccumulator::new(), |a, (g, p)| a.accumulated(g, p)).unwrap();
            prop_assert_eq!(left.merge(&right), whole);
            prop_assert_eq!(right.merge(&left), whole);
            prop_assert_eq!(whole.merge(&ConfusionAccumulator::new()), whole);
        }
    }
}
