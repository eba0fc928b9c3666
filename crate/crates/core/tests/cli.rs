//! End-to-end runs of the `lesionbench` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lesionbench::cli::{CHECKPOINT_FILE, CONFIG_COPY, EXIT_OK, EXIT_THRESHOLD, EXIT_VALIDATION, FP_REPORT_JSON, LOSS_LOG, REPORT_JSON};
use lesionbench::datasets::{registry_manifest, synth_fixture, DatasetManifest, SplitPolicy, SynthSpec, SYNTH_MANIFEST_NAME};
use lesionbench::record::DatasetId;
use lesionbench::transfer::{MATRIX_JSON, MATRIX_TSV};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lesionbench"));
    c.env_remove("LESIONBENCH_DATA_ROOT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lesionbench")
}

fn code(o: &Output) -> u8 {
    o.status.code().expect("exit code") as u8
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_config(manifest: &Path, arch: &str, epochs: usize) -> String {
    format!(
        "architecture = \"{arch}\"\nbackbone = \"compact\"\ninput_size = [64, 64]\nnum_classes = 6\n\
         optimizer = \"ADADELTA\"\nlearning_rate_mode = \"default\"\nepochs = {epochs}\nbatch_size = 4\nseed = 3\n\
         train_manifest = \"{m}\"\ntest_manifest = \"{m}\"\n",
        m = manifest.display()
    )
}

/// Synthetic fixture, a run config for it, and a trained run directory.
struct Trained {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    run: PathBuf,
}

fn trained(arch: &str, epochs: usize) -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    synth_fixture(&SynthSpec::new(4, (64, 64), 7), &root.join("data")).unwrap();
    let manifest = root.join("data").join(SYNTH_MANIFEST_NAME);
    let config = root.join("run.toml");
    fs::write(&config, run_config(&manifest, arch, epochs)).unwrap();
    let out = root.join("run");
    let o = run(&["train", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    Trained { _dir: dir, root, manifest, run: out }
}

#[test]
fn help_lists_every_command() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), EXIT_OK);
    for cmd in ["audit", "train", "evaluate", "transfer", "fp", "overlay", "report"] {
        assert!(stdout(&o).contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let o = run(&["audit", "--manifest", "x", "--frobnicate"]);
    assert_eq!(code(&o), EXIT_VALIDATION);
}

#[test]
fn audit_passes_conforming_manifest_and_reports_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    registry_manifest().write(&good).unwrap();
    let o = run(&["audit", "--manifest", s(&good), "--out", s(&dir.path().join("audit"))]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert!(dir.path().join("audit/audit.tsv").exists());

    let mut records = registry_manifest().records().to_vec();
    records.pop();
    let bad = dir.path().join("bad.txt");
    DatasetManifest::from_records(records, dir.path()).unwrap().write(&bad).unwrap();
    let o = run(&["audit", "--manifest", s(&bad)]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(stdout(&o).contains("Zhang"), "{}", stdout(&o));
}

#[test]
fn audit_of_missing_manifest_names_the_file() {
    let o = run(&["audit", "--manifest", "/nonexistent/manifest.txt"]);
    assert_ne!(code(&o), EXIT_OK);
    assert!(stderr(&o).contains("/nonexistent/manifest.txt"));
}

#[test]
fn relative_manifest_resolves_against_data_root() {
    let dir = tempfile::tempdir().unwrap();
    registry_manifest().write(&dir.path().join("m.txt")).unwrap();
    let o = bin()
        .args(["audit", "--manifest", "m.txt"])
        .env("LESIONBENCH_DATA_ROOT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
}

#[test]
fn invalid_architecture_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, run_config(Path::new("m.txt"), "DeepLab", 1)).unwrap();
    let o = run(&["train", "--config", s(&config), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), EXIT_VALIDATION);
    let err = stderr(&o);
    for name in ["RAGNet", "PSPNet", "SegNet", "UNet", "FCN8", "FCN32"] {
        assert!(err.contains(name), "{name} not listed in: {err}");
    }
    assert!(!dir.path().join("o").join(CHECKPOINT_FILE).exists());
}

#[test]
fn train_writes_run_directory_and_is_reproducible() {
    let t = trained("FCN8", 3);
    for f in [CONFIG_COPY, CHECKPOINT_FILE, LOSS_LOG] {
        assert!(t.run.join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(t.run.join(LOSS_LOG)).unwrap();
    assert_eq!(log.lines().count(), 3);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["mean_loss"].as_f64().unwrap().is_finite());
    }
    let again = t.root.join("again");
    let o = run(&["train", "--config", s(&t.run.join(CONFIG_COPY)), "--out", s(&again)]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    for f in [CHECKPOINT_FILE, LOSS_LOG, CONFIG_COPY] {
        assert_eq!(fs::read(t.run.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn evaluate_fp_overlay_and_report() {
    let t = trained("FCN8", 2);
    let ckpt = t.run.join(CHECKPOINT_FILE);

    let eval = t.root.join("eval");
    let o = run(&["evaluate", "--checkpoint", s(&ckpt), "--manifest", s(&t.manifest), "--out", s(&eval)]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    for f in [REPORT_JSON, "table_ii_dice.tsv", "table_iii_iou.tsv", "table_i.tsv", "dice.png"] {
        assert!(eval.join(f).exists(), "{f} missing");
    }
    let o = run(&[
        "evaluate", "--checkpoint", s(&ckpt), "--manifest", s(&t.manifest), "--out", s(&eval), "--min-mean-dice", "1.01",
    ]);
    assert_eq!(code(&o), EXIT_THRESHOLD);

    let healthy = t.root.join("healthy");
    synth_fixture(&SynthSpec::new(2, (64, 64), 9).healthy(true).id_prefix("h"), &healthy).unwrap();
    let fp = t.root.join("fp");
    let o = run(&[
        "fp", "--checkpoint", s(&ckpt), "--manifest", s(&healthy.join(SYNTH_MANIFEST_NAME)), "--out", s(&fp),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(fp.join(FP_REPORT_JSON)).unwrap()).unwrap();
    let tn = r["tn_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&tn));
    let tsv = fs::read_to_string(fp.join("tn_rate.tsv")).unwrap();
    assert!(tsv.contains("RAGNet\t0.9999\tpublished") && tsv.contains("FCN-32\t0.9379\tpublished"));

    let ov = t.root.join("overlay");
    let o = run(&[
        "overlay", "--checkpoint", s(&ckpt), "--manifest", s(&t.manifest), "--scan", "syn-0000", "--out", s(&ov),
        "--ground-truth",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert!(ov.join("syn-0000_FCN8.png").exists());
    assert!(ov.join("syn-0000_ground_truth.png").exists());
    let o = run(&[
        "overlay", "--checkpoint", s(&ckpt), "--manifest", s(&t.manifest), "--scan", "nope", "--out", s(&ov),
    ]);
    assert_eq!(code(&o), EXIT_VALIDATION);

    let rep = t.root.join("report");
    let o = run(&[
        "report", "--input", s(&eval.join(REPORT_JSON)), "--published", "--matrix", "published", "--compare",
        "RAGNet:UNet:tpr", "--compare", "FCN-8:RAGNet:mean_dice", "--out", s(&rep),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert!(stdout(&o).contains("RAGNet leads UNet by 9.49% on tpr"), "{}", stdout(&o));
    assert!(rep.join("table_iv.tsv").exists() && rep.join("comparisons.txt").exists());
    let o = run(&["report", "--published", "--compare", "RAGNet:UNet:accuracy", "--out", s(&rep)]);
    assert_ne!(code(&o), EXIT_OK);
}

#[test]
fn report_without_inputs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", s(dir.path())]);
    assert_eq!(code(&o), EXIT_VALIDATION);
}

fn two_groups(dir: &Path) -> PathBuf {
    let mut records = Vec::new();
    for (id, sub, seed) in [(DatasetId::RabbaniI, "r", 1), (DatasetId::DukeII, "d", 2)] {
        let spec = SynthSpec::new(4, (32, 32), seed).dataset(id).split(SplitPolicy::EveryNthTest(2)).id_prefix(sub);
        for mut r in synth_fixture(&spec, &dir.join(sub)).unwrap().records().to_vec() {
            r.image_ref = Path::new(sub).join(&r.image_ref);
            r.mask_ref = r.mask_ref.map(|p| Path::new(sub).join(p));
            records.push(r);
        }
    }
    let path = dir.join("groups.txt");
    DatasetManifest::from_records(records, dir).unwrap().write(&path).unwrap();
    path
}

#[test]
fn transfer_grid_resumes_to_identical_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = two_groups(dir.path());
    let grid = dir.path().join("grid.toml");
    fs::write(
        &grid,
        format!(
            "[grid]\npairs = [\"R->D\", \"D->R\"]\narchitectures = [\"FCN8\", \"FCN32\"]\nbase_seed = 42\nmanifest = \"{}\"\n\n\
             [run]\nbackbone = \"compact\"\ninput_size = [32, 32]\nnum_classes = 6\noptimizer = \"ADADELTA\"\n\
             learning_rate_mode = \"default\"\nepochs = 2\nbatch_size = 2\nseed = 0\n",
            manifest.display()
        ),
    )
    .unwrap();
    let once = dir.path().join("once");
    let o = run(&["transfer", "--grid", s(&grid), "--out", s(&once)]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert!(stdout(&o).contains("4 trained"), "{}", stdout(&o));

    let twice = dir.path().join("twice");
    let o = run(&["transfer", "--grid", s(&grid), "--out", s(&twice), "--max-new-cells", "2"]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert!(!twice.join(MATRIX_JSON).exists());
    let o = run(&["transfer", "--grid", s(&grid), "--out", s(&twice)]);
    assert!(stdout(&o).contains("2 trained, 2 reused"), "{}", stdout(&o));
    for f in [MATRIX_JSON, MATRIX_TSV] {
        assert_eq!(fs::read(once.join(f)).unwrap(), fs::read(twice.join(f)).unwrap(), "{f}");
    }

    let report = dir.path().join("report");
    let o = run(&["report", "--matrix", s(&once.join(MATRIX_JSON)), "--out", s(&report)]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(report.join("table_iv.tsv")).unwrap().lines().count(), 3);
}

#[test]
fn synth_command_writes_loadable_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--out", s(dir.path()), "--scans", "3", "--healthy", "--prefix", "h"]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let m = lesionbench::datasets::load_manifest(&dir.path().join(SYNTH_MANIFEST_NAME)).unwrap();
    assert_eq!(m.len(), 3);
    assert!(m.records().iter().all(|r| r.is_healthy()));
}
