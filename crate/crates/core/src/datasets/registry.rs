//! Published per-dataset totals and train/test allocations, and the audit
//! that checks a manifest against them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, SplitCounts};
use crate::record::{DatasetId, Modality, ScanRecord, Split};

fn counts(oct_total: u64, oct_train: u64, fundus_total: u64, fundus_train: u64) -> SplitCounts {
    SplitCounts {
        oct_train,
        oct_test: oct_total - oct_train,
        fundus_train,
        fundus_test: fundus_total - fundus_train,
    }
}

/// Expected scan counts for each of the seven public datasets.
pub fn expected_registry() -> BTreeMap<DatasetId, SplitCounts> {
    BTreeMap::from([
        (DatasetId::RabbaniI, counts(4_241, 1_061, 148, 37)),
        // healthy-only, used purely for testing
        (DatasetId::RabbaniII, counts(12_800, 0, 100, 0)),
        (DatasetId::DukeI, counts(38_400, 300, 0, 0)),
        (DatasetId::DukeII, counts(610, 305, 0, 0)),
        (DatasetId::DukeIII, counts(3_231, 3_048, 0, 0)),
        (DatasetId::Biomisa, counts(5_324, 1_299, 115, 29)),
        (DatasetId::Zhang, counts(109_309, 108_309, 0, 0)),
    ])
}

/// A manifest whose counts conform exactly to [`expected_registry`], with
/// placeholder image references. Useful for exercising the audit and grouping
/// logic without the real data.
pub fn registry_manifest() -> DatasetManifest {
    let mut records = Vec::new();
    for (dataset, c) in expected_registry() {
        let slug = dataset.as_str().to_ascii_lowercase();
        let blocks = [
            (Modality::Oct, Split::Train, c.oct_train),
            (Modality::Oct, Split::Test, c.oct_test),
            (Modality::Fundus, Split::Train, c.fundus_train),
            (Modality::Fundus, Split::Test, c.fundus_test),
        ];
        for (modality, split, n) in blocks {
            let kind = modality.as_str().to_ascii_lowercase();
            for i in 0..n {
                let stem = format!("{slug}/{kind}/{split}/{i:06}");
                let healthy = dataset == DatasetId::RabbaniII;
                records.push(ScanRecord {
                    scan_id: format!("{slug}-{kind}-{split}-{i:06}"),
                    dataset_id: dataset,
                    modality,
                    image_ref: format!("{stem}.png").into(),
                    mask_ref: (!healthy).then(|| format!("{stem}_mask.png").into()),
                    split,
                    pathology: if healthy { "normal" } else { "unspecified" }.to_string(),
                });
            }
        }
    }
    DatasetManifest::from_records(records, ".").expect("generated ids are unique")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountDelta {
    pub oct_train: i64,
    pub oct_test: i64,
    pub fundus_train: i64,
    pub fundus_test: i64,
}

impl CountDelta {
    fn between(actual: SplitCounts, expected: SplitCounts) -> Self {
        let d = |a: u64, e: u64| a as i64 - e as i64;
        CountDelta {
            oct_train: d(actual.oct_train, expected.oct_train),
            oct_test: d(actual.oct_test, expected.oct_test),
            fundus_train: d(actual.fundus_train, expected.fundus_train),
            fundus_test: d(actual.fundus_test, expected.fundus_test),
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == CountDelta::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub dataset: DatasetId,
    pub expected: SplitCounts,
    pub actual: SplitCounts,
    pub delta: CountDelta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub expected_total: SplitCounts,
    pub actual_total: SplitCounts,
    pub pass: bool,
}

/// Compares manifest counts against [`expected_registry`]. Datasets absent
/// from the registry (e.g. synthetic) are listed with zero expectations.
pub fn audit_splits(manifest: &DatasetManifest) -> AuditReport {
    let mut expected = expected_registry();
    for id in manifest.dataset_counts().keys() {
        expected.entry(*id).or_default();
    }
    let rows: Vec<AuditRow> = expected
        .into_iter()
        .map(|(dataset, expected)| {
            let actual = manifest
                .dataset_counts()
                .get(&dataset)
                .copied()
                .unwrap_or_default();
            AuditRow {
                dataset,
                expected,
                actual,
                delta: CountDelta::between(actual, expected),
            }
        })
        .collect();
    let sum = |f: fn(&AuditRow) -> SplitCounts| {
        rows.iter()
            .map(f)
            .fold(SplitCounts::default(), |a, b| a + b)
    };
    let expected_total = sum(|r| r.expected);
    let actual_total = sum(|r| r.actual);
    let pass = rows.iter().all(|r| r.delta.is_zero());
    AuditReport {
        rows,
        expected_total,
        actual_total,
        pass,
    }
}

impl AuditReport {
    pub fn failing_rows(&self) -> impl Iterator<Item = &AuditRow> {
        self.rows.iter().filter(|r| !r.delta.is_zero())
    }

    /// Tab-separated table, one row per dataset plus a total row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "dataset\toct_train\toct_test\tfundus_train\tfundus_test\
             \td_oct_train\td_oct_test\td_fundus_train\td_fundus_test\n",
        );
        for r in &self.rows {
            let a = r.actual;
            let d = r.delta;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.dataset,
                a.oct_train,
                a.oct_test,
                a.fundus_train,
                a.fundus_test,
                d.oct_train,
                d.oct_test,
                d.fundus_train,
                d.fundus_test
            )
            .unwrap();
        }
        let t = self.actual_total;
        let d = CountDelta::between(self.actual_total, self.expected_total);
        writeln!(
            out,
            "total\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.oct_train,
            t.oct_test,
            t.fundus_train,
            t.fundus_test,
            d.oct_train,
            d.oct_test,
            d.fundus_train,
            d.fundus_test
        )
        .unwrap();
        out
    }

    pub fn render_text(&self) -> String {
        let t = self.actual_total;
        let mut out = String::new();
        writeln!(out, "split audit: {}", if self.pass { "PASS" } else { "FAIL" }).unwrap();
        writeln!(
            out,
            "  total:  {} fundus / {} OCT",
            t.fundus_count(),
            t.oct_count()
        )
        .unwrap();
        writeln!(
            out,
            "  test:   {} fundus / {} OCT",
            t.fundus_test, t.oct_test
        )
        .unwrap();
        writeln!(
            out,
            "  train:  {} fundus / {} OCT",
            t.fundus_train, t.oct_train
        )
        .unwrap();
        for r in self.failing_rows() {
            writeln!(
                out,
                "  {}: delta oct_train={:+} oct_test={:+} fundus_train={:+} fundus_test={:+}",
                r.dataset, r.delta.oct_train, r.delta.oct_test, r.delta.fundus_train, r.delta.fundus_test
            )
            .unwrap();
        }
        out
    }
}
