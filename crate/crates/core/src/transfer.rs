//! Zero-shot transferability grid: train on one dataset group, test on
//! another, for every ordered pair and architecture.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Architecture, RunConfig};
use crate::datasets::{group, DatasetManifest, GroupId};
use crate::engine::{accumulate_predictions, provenance_for, train};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionAccumulator, MetricReport};
use crate::models::SegmentationModel;
use crate::record::Split;

/// Ordered (train, test) group pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub train: GroupId,
    pub test: GroupId,
}

impl Pair {
    pub const fn new(train: GroupId, test: GroupId) -> Self {
        Pair { train, test }
    }

    pub fn label(self) -> String {
        format!("{}→{}", self.train, self.test)
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.train, self.test)
    }
}

impl std::str::FromStr for Pair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once('→'))
            .ok_or_else(|| Error::InvalidConfig(vec![format!("pair `{s}` is not of the form X->Y")]))?;
        let pair = Pair::new(a.trim().parse()?, b.trim().parse()?);
        if pair.train == pair.test {
            return Err(Error::InvalidConfig(vec![format!("pair `{s}` trains and tests on the same group")]));
        }
        Ok(pair)
    }
}

use GroupId::{B, D, R, Z};

/// Row order of the published transferability table.
pub const TABLE_IV_PAIRS: [Pair; 12] = [
    Pair::new(R, D),
    Pair::new(D, R),
    Pair::new(R, Z),
    Pair::new(Z, R),
    Pair::new(B, R),
    Pair::new(R, B),
    Pair::new(Z, D),
    Pair::new(D, Z),
    Pair::new(D, B),
    Pair::new(B, D),
    Pair::new(B, Z),
    Pair::new(Z, B),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub train_group: GroupId,
    pub test_group: GroupId,
    pub architecture: Architecture,
    pub mean_iou: f64,
    pub seed: u64,
    pub config_digest: String,
    pub report: MetricReport,
}

impl TransferCell {
    pub fn pair(&self) -> Pair {
        Pair::new(self.train_group, self.test_group)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRanking {
    pub pair: Pair,
    /// Best first.
    pub order: Vec<Architecture>,
    /// Some values in the row are exactly equal.
    pub tied: bool,
}

/// Sorts by value descending, equal values alphabetically by name.
pub fn rank_values(pair: Pair, values: &[(Architecture, f64)]) -> RowRanking {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.as_str().cmp(b.0.as_str())));
    let tied = v.windows(2).any(|w| w[0].1 == w[1].1);
    RowRanking {
        pair,
        order: v.into_iter().map(|(a, _)| a).collect(),
        tied,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub pairs: Vec<Pair>,
    pub architectures: Vec<Architecture>,
    /// Pair-major, in the configured orders.
    pub cells: Vec<TransferCell>,
    pub ranking: Vec<RowRanking>,
}

impl TransferMatrix {
    /// Assembles and ranks; cells are reordered to pair-major layout.
    pub fn new(pairs: Vec<Pair>, architectures: Vec<Architecture>, mut cells: Vec<TransferCell>) -> Self {
        let key = |c: &TransferCell| {
            (
                pairs.iter().position(|p| *p == c.pair()).unwrap_or(usize::MAX),
                architectures.iter().position(|a| *a == c.architecture).unwrap_or(usize::MAX),
            )
        };
        cells.sort_by_key(key);
        let mut m = TransferMatrix {
            pairs,
            architectures,
            cells,
            ranking: Vec::new(),
        };
        m.ranking = m.pairs.iter().filter_map(|&p| rank_row(&m, p).ok()).collect();
        m
    }

    pub fn cell(&self, pair: Pair, architecture: Architecture) -> Option<&TransferCell> {
        self.cells
            .iter()
            .find(|c| c.pair() == pair && c.architecture == architecture)
    }

    pub fn is_complete(&self) -> bool {
        self.pairs
            .iter()
            .all(|&p| self.architectures.iter().all(|&a| self.cell(p, a).is_some()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn rank_row(matrix: &TransferMatrix, pair: Pair) -> Result<RowRanking> {
    let values = matrix
        .architectures
        .iter()
        .map(|&a| matrix.cell(pair, a).map(|c| (a, c.mean_iou)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::IncompleteRow(pair.to_string()))?;
    Ok(rank_values(pair, &values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Template for every cell; architecture and seed are replaced.
    pub run: RunConfig,
    pub pairs: Vec<Pair>,
    pub architectures: Vec<Architecture>,
    pub base_seed: u64,
    /// Parallel cell workers.
    pub jobs: usize,
    /// Stop after training this many new cells (the rest stay pending).
    pub max_new_cells: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    pairs: Option<Vec<String>>,
    architectures: Option<Vec<String>>,
    base_seed: Option<u64>,
    jobs: Option<usize>,
    manifest: Option<PathBuf>,
}

impl GridConfig {
    pub fn new(run: RunConfig, pairs: Vec<Pair>, architectures: Vec<Architecture>, base_seed: u64) -> Self {
        GridConfig {
            run,
            pairs,
            architectures,
            base_seed,
            jobs: 1,
            max_new_cells: None,
        }
    }

    /// `[grid]` table (pairs, architectures, base_seed, jobs, manifest)
    /// plus a `[run]` table in run-config format. Missing pairs or
    /// architectures mean the full published grid; `manifest` fills the
    /// run's manifest paths when they are omitted.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        let grid: RawGrid = match doc.remove("grid") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?,
            None => return Err(Error::InvalidConfig(vec!["missing [grid] table".into()])),
        };
        let mut run = match doc.remove("run") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(Error::InvalidConfig(vec!["missing [run] table".into()])),
        };
        if let Some(extra) = doc.keys().next() {
            return Err(Error::InvalidConfig(vec![format!("unknown top-level key `{extra}`")]));
        }
        let mut problems = Vec::new();
        let pairs = match grid.pairs {
            None => TABLE_IV_PAIRS.to_vec(),
            Some(list) => list
                .iter()
                .filter_map(|s| s.parse::<Pair>().map_err(|e| problems.push(e.to_string())).ok())
                .collect(),
        };
        let architectures = match grid.architectures {
            None => Architecture::ALL.to_vec(),
            Some(list) => list
                .iter()
                .filter_map(|s| s.parse::<Architecture>().map_err(|e| problems.push(e.to_string())).ok())
                .collect(),
        };
        if let Some(m) = &grid.manifest {
            for key in ["train_manifest", "test_manifest"] {
                run.entry(key)
                    .or_insert_with(|| toml::Value::String(m.display().to_string()));
            }
        }
        if let Some(first) = architectures.first() {
            run.entry("architecture")
                .or_insert_with(|| toml::Value::String(first.as_str().into()));
        }
        let run = match RunConfig::from_toml(&toml::to_string(&run).map_err(|e| Error::Toml(e.to_string()))?) {
            Ok(r) => Some(r),
            Err(Error::InvalidConfig(p)) => {
                problems.extend(p);
                None
            }
            Err(e) => return Err(e),
        };
        if pairs.is_empty() {
            problems.push("grid has no pairs".into());
        }
        if architectures.is_empty() {
            problems.push("grid has no architectures".into());
        }
        if grid.jobs == Some(0) {
            problems.push("jobs must be at least 1".into());
        }
        match run {
            Some(run) if problems.is_empty() => Ok(GridConfig {
                run,
                pairs,
                architectures,
                base_seed: grid.base_seed.unwrap_or(0),
                jobs: grid.jobs.unwrap_or(1),
                max_new_cells: None,
            }),
            _ => Err(Error::InvalidConfig(problems)),
        }
    }

    /// Every (pair, architecture) cell, pair-major, without duplicates.
    pub fn schedule(&self) -> Vec<(Pair, Architecture)> {
        let mut out: Vec<(Pair, Architecture)> = Vec::new();
        for &p in &self.pairs {
            for &a in &self.architectures {
                if p.train != p.test && !out.contains(&(p, a)) {
                    out.push((p, a));
                }
            }
        }
        out
    }

    /// Independent 63-bit seed of one cell (fits a TOML integer).
    pub fn cell_seed(&self, pair: Pair, architecture: Architecture) -> u64 {
        let mut h = Sha256::new();
        h.update(self.base_seed.to_le_bytes());
        h.update(pair.to_string().as_bytes());
        h.update(architecture.as_str().as_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes")) >> 1
    }

    pub fn cell_config(&self, pair: Pair, architecture: Architecture) -> RunConfig {
        let mut c = self.run.clone();
        c.architecture = architecture;
        c.seed = self.cell_seed(pair, architecture);
        c
    }

    /// Directory name of a cell, keyed by pair, architecture and config.
    pub fn cell_dir_name(&self, pair: Pair, architecture: Architecture) -> String {
        let digest = self.cell_config(pair, architecture).digest();
        format!("{}-{}-{}-{}", pair.train, pair.test, architecture.as_str(), &digest[..16])
    }
}

pub const CELLS_DIR: &str = "cells";
pub const CELL_FILE: &str = "cell.json";
pub const MATRIX_JSON: &str = "matrix.json";
pub const MATRIX_TSV: &str = "matrix.tsv";

#[derive(Debug)]
pub struct GridOutcome {
    pub matrix: TransferMatrix,
    pub trained: usize,
    pub reused: usize,
    pub pending: usize,
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn run_cell(grid: &GridConfig, manifest: &DatasetManifest, pair: Pair, arch: Architecture) -> Result<TransferCell> {
    let train_set = group(manifest, pair.train).split(Split::Train);
    let test_set = group(manifest, pair.test).split(Split::Test);
    if train_set.is_empty() {
        return Err(Error::MissingGroup(format!("{} (train split)", pair.train)));
    }
    if test_set.is_empty() {
        return Err(Error::MissingGroup(format!("{} (test split)", pair.test)));
    }
    let config = grid.cell_config(pair, arch);
    let outcome = train(&config, &train_set)?;
    let model = &outcome.state.model;
    let acc = accumulate_predictions(model, &test_set)?;
    let label = format!("{} {}", pair.label(), arch.display_name());
    let report = MetricReport::from_accumulator(&acc, provenance_for(model, &label, Some(config.digest())), false);
    Ok(TransferCell {
        train_group: pair.train,
        test_group: pair.test,
        architecture: arch,
        // no lesion pixels anywhere: nothing to transfer, score as zero
        mean_iou: report.mean_iou.unwrap_or(0.0),
        seed: config.seed,
        config_digest: config.digest(),
        report,
    })
}

/// Runs every pending cell, reusing finished cells found under
/// `out_dir/cells`, and writes the matrix (JSON and Table IV TSV) once the
/// grid is complete.
pub fn run_grid(grid: &GridConfig, manifest: &DatasetManifest, out_dir: &Path) -> Result<GridOutcome> {
    for &p in &grid.pairs {
        if group(manifest, p.train).split(Split::Train).is_empty() {
            return Err(Error::MissingGroup(format!("{} (train split)", p.train)));
        }
        if group(manifest, p.test).split(Split::Test).is_empty() {
            return Err(Error::MissingGroup(format!("{} (test split)", p.test)));
        }
    }
    let cells_dir = out_dir.join(CELLS_DIR);
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let mut done: Vec<TransferCell> = Vec::new();
    let mut todo: Vec<(Pair, Architecture, PathBuf)> = Vec::new();
    for (pair, arch) in grid.schedule() {
        let dir = cells_dir.join(grid.cell_dir_name(pair, arch));
        let file = dir.join(CELL_FILE);
        match fs::read_to_string(&file) {
            Ok(text) => done.push(serde_json::from_str(&text)?),
            Err(_) => todo.push((pair, arch, dir)),
        }
    }
    let reused = done.len();
    let budget = grid.max_new_cells.unwrap_or(usize::MAX).min(todo.len());
    let pending = todo.len() - budget;
    todo.truncate(budget);

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<TransferCell>>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..grid.jobs.clamp(1, todo.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((pair, arch, dir)) = todo.get(i) else { break };
                let cell_id = format!("{pair}/{arch}");
                let result = run_cell(grid, manifest, *pair, *arch)
                    .and_then(|cell| {
                        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                        write_atomic(&dir.join(CELL_FILE), serde_json::to_string_pretty(&cell)?.as_bytes())?;
                        Ok(cell)
                    })
                    .map_err(|e| Error::Cell {
                        cell: cell_id,
                        source: Box::new(e),
                    });
                results.lock().expect("no worker panicked").push(result);
            });
        }
    });
    let results = results.into_inner().expect("no worker panicked");
    let trained = results.len();
    for r in results {
        done.push(r?);
    }
    let matrix = TransferMatrix::new(grid.pairs.clone(), grid.architectures.clone(), done);
    if matrix.is_complete() {
        write_atomic(&out_dir.join(MATRIX_JSON), matrix.to_json()?.as_bytes())?;
        write_atomic(&out_dir.join(MATRIX_TSV), crate::report::table_iv_tsv(&matrix).as_bytes())?;
    }
    Ok(GridOutcome {
        matrix,
        trained,
        reused,
        pending,
    })
}

/// Pooled background counts of `model` over a healthy-only manifest, with
/// the TN rate filled in. Any lesion label in a ground-truth mask aborts.
pub fn fp_experiment(model: &SegmentationModel, healthy: &DatasetManifest) -> Result<MetricReport> {
    if healthy.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut acc = ConfusionAccumulator::new();
    for record in healthy.records() {
        let scan = crate::engine::data::load_scan(healthy, record, model.spec().input_size)?;
        if !scan.mask.is_all_background() {
            return Err(Error::NonHealthyScan(record.scan_id.clone()));
        }
        let pred = crate::engine::predict_tensor(model, &scan.image, scan.mask.dims())?;
        acc.accumulate(&scan.mask, &pred)?;
    }
    let label = format!("{} healthy-set", model.spec().architecture.display_name());
    Ok(MetricReport::from_accumulator(&acc, provenance_for(model, &label, None), true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_alphabetically_and_are_flagged() {
        let p = Pair::new(R, D);
        let r = rank_values(p, &[(Architecture::UNet, 0.5), (Architecture::Fcn8, 0.5), (Architecture::RagNet, 0.5)]);
        assert_eq!(r.order, vec![Architecture::Fcn8, Architecture::RagNet, Architecture::UNet]);
        assert!(r.tied);
        let r = rank_values(p, &[(Architecture::UNet, 0.5), (Architecture::Fcn8, 0.4)]);
        assert!(!r.tied);
    }

    #[test]
    fn pair_parsing() {
        assert_eq!("Z->D".parse::<Pair>().unwrap(), Pair::new(Z, D));
        assert_eq!("R→B".parse::<Pair>().unwrap(), Pair::new(R, B));
        assert!("D->D".parse::<Pair>().is_err());
        assert!("D-Z".parse::<Pair>().is_err());
    }

    #[test]
    fn published_grid_has_twelve_distinct_ordered_pairs() {
        let mut all: Vec<Pair> = Vec::new();
        for a in GroupId::ALL {
            for b in GroupId::ALL {
                if a != b {
                    all.push(Pair::new(a, b));
                }
            }
        }
        let mut table = TABLE_IV_PAIRS.to_vec();
        table.sort();
        all.sort();
        assert_eq!(table, all);
    }
}
