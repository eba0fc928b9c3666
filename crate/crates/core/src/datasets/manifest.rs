//! Line-oriented manifest files.
//!
//! ```text
//! # lesionbench manifest v1: scan_id|dataset_id|modality|image_ref|mask_ref|split|pathology
//! rb1-0001|RabbaniI|OCT|rabbani1/oct/0001.png|rabbani1/mask/0001.png|train|DME
//! rb2-0001|RabbaniII|fundus|rabbani2/f/0001.png||test|normal
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. An empty `mask_ref`
//! marks a healthy scan. Relative paths resolve against the manifest's
//! directory unless a data root is given.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{DatasetId, Modality, ScanRecord, Split};

pub const MANIFEST_HEADER: &str =
    "# lesionbench manifest v1: scan_id|dataset_id|modality|image_ref|mask_ref|split|pathology";

/// Scan counts of one dataset broken down by modality and split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub oct_train: u64,
    pub oct_test: u64,
    pub fundus_train: u64,
    pub fundus_test: u64,
}

impl SplitCounts {
    pub fn train_count(&self) -> u64 {
        self.oct_train + self.fundus_train
    }

    pub fn test_count(&self) -> u64 {
        self.oct_test + self.fundus_test
    }

    pub fn oct_count(&self) -> u64 {
        self.oct_train + self.oct_test
    }

    pub fn fundus_count(&self) -> u64 {
        self.fundus_train + self.fundus_test
    }

    fn bump(&mut self, modality: Modality, split: Split) {
        *match (modality, split) {
            (Modality::Oct, Split::Train) => &mut self.oct_train,
            (Modality::Oct, Split::Test) => &mut self.oct_test,
            (Modality::Fundus, Split::Train) => &mut self.fundus_train,
            (Modality::Fundus, Split::Test) => &mut self.fundus_test,
        } += 1;
    }
}

impl std::ops::Add for SplitCounts {
    type Output = SplitCounts;

    fn add(self, o: Self) -> Self {
        SplitCounts {
            oct_train: self.oct_train + o.oct_train,
            oct_test: self.oct_test + o.oct_test,
            fundus_train: self.fundus_train + o.fundus_train,
            fundus_test: self.fundus_test + o.fundus_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<ScanRecord>,
    dataset_counts: BTreeMap<DatasetId, SplitCounts>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Builds a manifest from records, rejecting duplicate scan ids.
    pub fn from_records(records: Vec<ScanRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.scan_id.as_str()) {
                return Err(Error::DuplicateScanId {
                    context: "records".into(),
                    line: i + 1,
                    scan_id: r.scan_id.clone(),
                });
            }
        }
        Ok(Self::from_unique(records, base_dir.into()))
    }

    fn from_unique(records: Vec<ScanRecord>, base_dir: PathBuf) -> Self {
        let mut dataset_counts: BTreeMap<DatasetId, SplitCounts> = BTreeMap::new();
        for r in &records {
            dataset_counts
                .entry(r.dataset_id)
                .or_default()
                .bump(r.modality, r.split);
        }
        Self {
            records,
            dataset_counts,
            base_dir,
        }
    }

    pub fn records(&self) -> &[ScanRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dataset_counts(&self) -> &BTreeMap<DatasetId, SplitCounts> {
        &self.dataset_counts
    }

    pub fn totals(&self) -> SplitCounts {
        self.dataset_counts
            .values()
            .fold(SplitCounts::default(), |a, &b| a + b)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn with_base_dir(mut self, base_dir: impl Into<PathBuf>) -> Self {
        self.base_dir = base_dir.into();
        self
    }

    /// Sub-manifest of the records accepted by `keep`, sharing the base dir.
    pub fn filter(&self, mut keep: impl FnMut(&ScanRecord) -> bool) -> Self {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::from_unique(records, self.base_dir.clone())
    }

    pub fn split(&self, split: Split) -> Self {
        self.filter(|r| r.split == split)
    }

    pub fn count(&self, modality: Modality) -> u64 {
        self.records.iter().filter(|r| r.modality == modality).count() as u64
    }

    pub fn image_path(&self, record: &ScanRecord) -> PathBuf {
        record.image_path(&self.base_dir)
    }

    pub fn mask_path(&self, record: &ScanRecord) -> Option<PathBuf> {
        record.mask_path(&self.base_dir)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{MANIFEST_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{}|{}|{}|{}|{}|{}|{}",
                r.scan_id,
                r.dataset_id,
                r.modality,
                r.image_ref.display(),
                r.mask_ref
                    .as_ref()
                    .map(|m| m.display().to_string())
                    .unwrap_or_default(),
                r.split,
                r.pathology
            )?;
        }
        Ok(())
    }
}

/// Loads a manifest file, streaming it line by line.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    parse_manifest(BufReader::new(file), &path.display().to_string(), base)
}

pub fn parse_manifest<R: BufRead>(
    reader: R,
    context: &str,
    base_dir: PathBuf,
) -> Result<DatasetManifest> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            context: context.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = parse_line(trimmed, context, line_no)?;
        if !seen.insert(record.scan_id.clone()) {
            return Err(Error::DuplicateScanId {
                context: context.to_string(),
                line: line_no,
                scan_id: record.scan_id,
            });
        }
        records.push(record);
    }
    Ok(DatasetManifest::from_unique(records, base_dir))
}

fn parse_line(line: &str, context: &str, line_no: usize) -> Result<ScanRecord> {
    let parse_err = |message: String| Error::Parse {
        context: context.to_string(),
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split('|').collect();
    let [scan_id, dataset, modality, image_ref, mask_ref, split, pathology] = fields[..] else {
        return Err(parse_err(format!(
            "expected 7 `|`-separated fields, found {}",
            fields.len()
        )));
    };
    if scan_id.is_empty() {
        return Err(parse_err("empty scan_id".into()));
    }
    if image_ref.is_empty() {
        return Err(parse_err("empty image_ref".into()));
    }
    let dataset_id = dataset.parse().map_err(|value| Error::UnknownDataset {
        context: context.to_string(),
        line: line_no,
        value,
    })?;
    Ok(ScanRecord {
        scan_id: scan_id.to_string(),
        dataset_id,
        modality: modality.parse().map_err(parse_err)?,
        image_ref: PathBuf::from(image_ref),
        mask_ref: (!mask_ref.is_empty()).then(|| PathBuf::from(mask_ref)),
        split: split.parse().map_err(parse_err)?,
        pathology: pathology.to_string(),
    })
}
