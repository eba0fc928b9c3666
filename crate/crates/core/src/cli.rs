//! Command-line front end. The binary only calls [`main_with_args`].

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::classmap::default_class_map;
use crate::config::RunConfig;
use crate::datasets::{audit_splits, load_manifest, synth_fixture, DatasetManifest, SplitPolicy, SynthSpec};
use crate::engine::{self, data, load_checkpoint, save_checkpoint, Trainer};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::record::{DatasetId, Split};
use crate::reference;
use crate::report::{self, ClassMetric};
use crate::transfer::{fp_experiment, run_grid, GridConfig, TransferMatrix};

pub const DATA_ROOT_ENV: &str = "LESIONBENCH_DATA_ROOT";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_THRESHOLD: u8 = 3;

pub const CONFIG_COPY: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const LOSS_LOG: &str = "loss.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const FP_REPORT_JSON: &str = "fp_report.json";

#[derive(Debug, Parser)]
#[command(name = "lesionbench", version, about = "Retinal lesion segmentation benchmark")]
pub struct Cli {
    /// Directory that relative manifest paths are resolved against.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check manifest split counts against the dataset registry.
    Audit(AuditArgs),
    /// Train one model from a run configuration.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Evaluate(EvaluateArgs),
    /// Run the cross-dataset transferability grid.
    Transfer(TransferArgs),
    /// False-positive test on healthy scans.
    Fp(FpArgs),
    /// Color overlay of a prediction for one scan.
    Overlay(OverlayArgs),
    /// Render tables, charts and comparisons from saved reports.
    Report(ReportArgs),
    /// Write a synthetic fixture dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the audit table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub architecture: Option<String>,
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to one split (train or test); default is every record.
    #[arg(long)]
    pub split: Option<Split>,
    /// Exit 3 when the mean lesion dice is below this.
    #[arg(long)]
    pub min_mean_dice: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Grid configuration with `[grid]` and `[run]` tables.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest covering every group; overrides the grid's `manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Train at most this many new cells, then stop.
    #[arg(long)]
    pub max_new_cells: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FpArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest of healthy scans only.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Exit 3 when the TN rate is below this.
    #[arg(long)]
    pub min_tn_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// scan_id of the record to render.
    #[arg(long)]
    pub scan: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Also render the ground-truth overlay.
    #[arg(long)]
    pub ground_truth: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by `evaluate` or `fp`.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Include the published reference rows.
    #[arg(long)]
    pub published: bool,
    /// Transfer matrix JSON; `published` uses the published table.
    #[arg(long)]
    pub matrix: Option<String>,
    /// `LABEL_A:LABEL_B:METRIC`, repeatable.
    #[arg(long = "compare")]
    pub comparisons: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scans: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic")]
    pub dataset: DatasetId,
    #[arg(long)]
    pub healthy: bool,
    /// Every n-th scan goes to the test split; 0 keeps all in train.
    #[arg(long, default_value_t = 0)]
    pub test_every: usize,
    #[arg(long, default_value = "syn")]
    pub prefix: String,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Inputs were read but did not pass (audit mismatch).
    Failed,
    /// A requested threshold was missed.
    BelowThreshold,
}

struct Ctx {
    data_root: Option<PathBuf>,
}

impl Ctx {
    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.data_root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn manifest(&self, path: &Path) -> Result<DatasetManifest> {
        load_manifest(&self.resolve(path))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn cmd_audit(ctx: &Ctx, a: &AuditArgs) -> Result<Outcome> {
    let manifest = ctx.manifest(&a.manifest)?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let audit = audit_splits(&manifest);
    print!("{}", audit.render_text());
    if !audit.pass {
        print!("{}", audit.to_tsv());
    }
    if let Some(out) = &a.out {
        write_file(&out.join("audit.tsv"), &audit.to_tsv())?;
        write_file(&out.join("audit.json"), &json(&audit)?)?;
    }
    Ok(if audit.pass { Outcome::Ok } else { Outcome::Failed })
}

/// Run configuration after command-line overrides.
pub fn train_config(text: &str, a: &TrainArgs) -> Result<RunConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
    let mut set = |key: &str, v: toml::Value| {
        doc.insert(key.to_string(), v);
    };
    if let Some(v) = &a.architecture {
        set("architecture", toml::Value::String(v.clone()));
    }
    if let Some(v) = &a.backbone {
        set("backbone", toml::Value::String(v.clone()));
    }
    if let Some(v) = a.epochs {
        set("epochs", toml::Value::Integer(v as i64));
    }
    if let Some(v) = a.batch_size {
        set("batch_size", toml::Value::Integer(v as i64));
    }
    if let Some(v) = a.seed {
        set("seed", toml::Value::Integer(v as i64));
    }
    if let Some(v) = &a.train_manifest {
        set("train_manifest", toml::Value::String(v.display().to_string()));
    }
    RunConfig::from_toml(&toml::to_string(&doc).map_err(|e| Error::Toml(e.to_string()))?)
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<Outcome> {
    let config = train_config(&read_file(&a.config)?, a)?;
    let manifest = ctx.manifest(&config.train_manifest)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out.join(CONFIG_COPY), &config.to_toml())?;
    let log_path = a.out.join(LOSS_LOG);
    write_file(&log_path, "")?;
    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut trainer = Trainer::new(&config, &manifest)?;
    for _ in 0..config.epochs {
        let e = trainer.run_epoch()?;
        writeln!(log, "{}", serde_json::to_string(&e)?).map_err(|e| Error::io(&log_path, e))?;
    }
    let ckpt = a.out.join(CHECKPOINT_FILE);
    save_checkpoint(trainer.state(), Some(&config), &ckpt)?;
    println!(
        "trained {} for {} epochs ({} steps); final loss {:.6}",
        config.architecture.display_name(),
        trainer.state().epoch,
        trainer.state().step,
        trainer.state().running_loss
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(Outcome::Ok)
}

fn print_report(r: &MetricReport) {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{}", r.label());
    println!("  mean dice {}  mean iou {}", f(r.mean_dice), f(r.mean_iou));
    println!("  tpr {}  ppv {}  f1 {}  ({})", f(r.micro_tpr), f(r.micro_ppv), f(r.micro_f1), r.provenance.pixel_metrics);
    if r.tn_rate.is_some() {
        println!("  tn rate {}", f(r.tn_rate));
    }
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<Outcome> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut manifest = ctx.manifest(&a.manifest)?;
    if let Some(s) = a.split {
        manifest = manifest.split(s);
    }
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let model = &ck.state.model;
    let label = model.spec().architecture.display_name();
    let report = engine::evaluate(model, &manifest, label)?;
    let reports = [report];
    report::emit_tables(&reports, None, &a.out)?;
    write_file(&a.out.join(REPORT_JSON), &json(&reports[0])?)?;
    report::save_bar_chart(&reports, ClassMetric::Dice, &default_class_map(), &a.out.join("dice.png"))?;
    print_report(&reports[0]);
    Ok(match a.min_mean_dice {
        Some(t) if reports[0].mean_dice.is_none_or(|d| d < t) => Outcome::BelowThreshold,
        _ => Outcome::Ok,
    })
}

fn cmd_transfer(ctx: &Ctx, a: &TransferArgs) -> Result<Outcome> {
    let mut grid = GridConfig::from_toml(&read_file(&a.grid)?)?;
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(Error::InvalidConfig(vec!["jobs must be at least 1".into()]));
        }
        grid.jobs = j;
    }
    grid.max_new_cells = a.max_new_cells;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| grid.run.train_manifest.clone());
    let manifest = ctx.manifest(&manifest_path)?;
    let outcome = run_grid(&grid, &manifest, &a.out)?;
    println!(
        "cells: {} trained, {} reused, {} pending",
        outcome.trained, outcome.reused, outcome.pending
    );
    if outcome.matrix.is_complete() {
        print!("{}", report::table_iv_tsv(&outcome.matrix));
    }
    Ok(Outcome::Ok)
}

fn cmd_fp(ctx: &Ctx, a: &FpArgs) -> Result<Outcome> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let manifest = ctx.manifest(&a.manifest)?;
    let r = fp_experiment(&ck.state.model, &manifest)?;
    write_file(&a.out.join(FP_REPORT_JSON), &json(&r)?)?;
    let mut tsv = String::from("model\ttn_rate\tsource\n");
    tsv.push_str(&format!("{}\t{:.4}\tmeasured\n", r.label(), r.tn_rate.unwrap_or(f64::NAN)));
    for (arch, v) in reference::TN_RATE_REFERENCE {
        tsv.push_str(&format!("{}\t{v:.4}\tpublished\n", arch.display_name()));
    }
    write_file(&a.out.join("tn_rate.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(match a.min_tn_rate {
        Some(t) if r.tn_rate.is_none_or(|v| v < t) => Outcome::BelowThreshold,
        _ => Outcome::Ok,
    })
}

fn cmd_overlay(ctx: &Ctx, a: &OverlayArgs) -> Result<Outcome> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let manifest = ctx.manifest(&a.manifest)?;
    let record = manifest
        .records()
        .iter()
        .find(|r| r.scan_id == a.scan)
        .ok_or_else(|| Error::InvalidConfig(vec![format!("scan `{}` is not in the manifest", a.scan)]))?;
    let model = &ck.state.model;
    let rgb = data::load_rgb(&manifest.image_path(record))?;
    let dims = (rgb.width() as usize, rgb.height() as usize);
    let pred = engine::predict_tensor(model, &data::image_tensor(&rgb, model.spec().input_size)?, dims)?;
    let cmap = default_class_map();
    let arch = model.spec().architecture.as_str();
    let path = a.out.join(format!("{}_{arch}.png", record.scan_id));
    report::render_overlay(&rgb, &pred, &cmap, a.alpha)?.save(&path)?;
    println!("{}", path.display());
    if a.ground_truth {
        let gt = data::load_target(&manifest, record, dims)?;
        let path = a.out.join(format!("{}_ground_truth.png", record.scan_id));
        report::render_overlay(&rgb, &gt, &cmap, a.alpha)?.save(&path)?;
        println!("{}", path.display());
    }
    Ok(Outcome::Ok)
}

fn read_reports(path: &Path) -> Result<Vec<MetricReport>> {
    let text = read_file(path)?;
    if let Ok(r) = serde_json::from_str::<MetricReport>(&text) {
        return Ok(vec![r]);
    }
    #[derive(serde::Deserialize)]
    struct Mirror {
        reports: Vec<MetricReport>,
    }
    match serde_json::from_str::<Mirror>(&text) {
        Ok(m) => Ok(m.reports),
        Err(_) => Ok(serde_json::from_str::<Vec<MetricReport>>(&text)?),
    }
}

fn cmd_report(a: &ReportArgs) -> Result<Outcome> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        reports.extend(read_reports(p)?);
    }
    if a.published {
        reports.extend(reference::published_reports());
    }
    let matrix = match a.matrix.as_deref() {
        None => None,
        Some("published") => Some(reference::published_matrix()),
        Some(p) => Some(TransferMatrix::from_json(&read_file(Path::new(p))?)?),
    };
    if reports.is_empty() && matrix.is_none() {
        return Err(Error::InvalidConfig(vec!["nothing to report: pass --input, --published or --matrix".into()]));
    }
    for p in report::emit_tables(&reports, matrix.as_ref(), &a.out)? {
        println!("{}", p.display());
    }
    if !reports.is_empty() {
        let cmap = default_class_map();
        report::save_bar_chart(&reports, ClassMetric::Dice, &cmap, &a.out.join("dice.png"))?;
        report::save_bar_chart(&reports, ClassMetric::Iou, &cmap, &a.out.join("iou.png"))?;
    }
    let mut lines = String::new();
    for spec in &a.comparisons {
        let parts: Vec<&str> = spec.rsplitn(3, ':').collect();
        let [metric, b, a_label] = parts[..] else {
            return Err(Error::InvalidConfig(vec![format!("comparison `{spec}` is not LABEL_A:LABEL_B:METRIC")]));
        };
        let find = |label: &str| {
            reports
                .iter()
                .find(|r| r.label() == label)
                .ok_or_else(|| Error::InvalidConfig(vec![format!("no report labelled `{label}`")]))
        };
        let c = report::compare(find(a_label)?, find(b)?, metric)?;
        println!("{}", c.summary);
        lines.push_str(&c.summary);
        lines.push('\n');
    }
    if !lines.is_empty() {
        write_file(&a.out.join("comparisons.txt"), &lines)?;
    }
    Ok(Outcome::Ok)
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome> {
    let policy = match a.test_every {
        0 => SplitPolicy::AllTrain,
        n => SplitPolicy::EveryNthTest(n),
    };
    let spec = SynthSpec::new(a.scans, (a.width, a.height), a.seed)
        .dataset(a.dataset)
        .healthy(a.healthy)
        .split(policy)
        .id_prefix(&a.prefix);
    let m = synth_fixture(&spec, &a.out)?;
    println!("wrote {} scans to {}", m.len(), a.out.display());
    Ok(Outcome::Ok)
}

/// Runs a parsed command.
pub fn run(cli: Cli) -> Result<Outcome> {
    let ctx = Ctx { data_root: cli.data_root };
    match &cli.command {
        Command::Audit(a) => cmd_audit(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Transfer(a) => cmd_transfer(&ctx, a),
        Command::Fp(a) => cmd_fp(&ctx, a),
        Command::Overlay(a) => cmd_overlay(&ctx, a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Exit status for an error: 1 for bad inputs, 2 for failures while running.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::from(EXIT_OK),
        Ok(Outcome::Failed) => ExitCode::from(EXIT_VALIDATION),
        Ok(Outcome::BelowThreshold) => ExitCode::from(EXIT_THRESHOLD),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Architecture;

    #[test]
    fn every_command_parses_help() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        for name in ["audit", "train", "evaluate", "transfer", "fp", "overlay", "report", "synth"] {
            assert!(Cli::command().find_subcommand(name).is_some(), "{name}");
        }
    }

    #[test]
    fn unknown_flag_fails() {
        assert!(Cli::try_parse_from(["lesionbench", "audit", "--manifest", "m", "--bogus"]).is_err());
    }

    #[test]
    fn flags_override_config() {
        let text = "architecture = \"UNet\"\nbackbone = \"compact\"\ninput_size = [64, 64]\nnum_classes = 6\n\
                    optimizer = \"ADADELTA\"\nlearning_rate_mode = \"default\"\nepochs = 3\nbatch_size = 2\nseed = 1\n\
                    train_manifest = \"a\"\ntest_manifest = \"b\"\n";
        let cli = Cli::try_parse_from([
            "lesionbench", "train", "--config", "c", "--out", "o", "--epochs", "9", "--architecture", "fcn8",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let c = train_config(text, &a).unwrap();
        assert_eq!(c.epochs, 9);
        assert_eq!(c.architecture, Architecture::Fcn8);
        assert_eq!(c.batch_size, 2);
    }
}
