//! Acceptance criteria 1–8. Each test prints exactly one PASS/FAIL line.
//! Tests hold a shared lock so that their wall-clock budgets are measured
//! without interference from each other.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lesionbench::classmap::{LesionClass, NUM_CLASSES};
use lesionbench::config::{Architecture, RunConfig};
use lesionbench::datasets::{
    audit_splits, registry_manifest, synth_fixture, DatasetManifest, GroupId, SplitPolicy, SynthSpec,
};
use lesionbench::engine::gradcheck::{decoder_fragments, gradcheck};
use lesionbench::engine::{evaluate, predict, save_checkpoint, train, Trainer};
use lesionbench::mask::MaskImage;
use lesionbench::metrics::{
    dice, f1_from_rates, iou, mean_defined, micro_pixel_metrics, relative_improvement, tn_rate,
    ConfusionAccumulator, MetricReport,
};
use lesionbench::models::{build, rag_decoder, BackboneSpec, EncoderTaps, Head, ModelSpec, SegmentationModel};
use lesionbench::record::{DatasetId, Split};
use lesionbench::reference::{IMPROVEMENT_CLAIMS, TABLE_I, TABLE_II_DICE, TABLE_III_IOU, TABLE_IV};
use lesionbench::report::{emit_tables, table_iv_tsv};
use lesionbench::transfer::{
    fp_experiment, rank_row, rank_values, run_grid, GridConfig, Pair, MATRIX_JSON, MATRIX_TSV,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes straight to stdout, which the test harness does not capture, so
/// verdicts show without `--nocapture`.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn verdict(n: usize, title: &str, failures: &[String], elapsed: Duration) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    say(&format!("{status} criterion {n}: {title} ({:.1}s)", elapsed.as_secs_f64()));
    for f in failures {
        say(&format!("    {f}"));
    }
    assert!(failures.is_empty(), "criterion {n} failed: {failures:?}");
}

// ---------------------------------------------------------------- 1

/// Per-class (tp, fp, fn, tn) by visiting every pixel.
fn brute_counts(pairs: &[(MaskImage, MaskImage)]) -> [[u64; 4]; NUM_CLASSES] {
    let mut out = [[0u64; 4]; NUM_CLASSES];
    for (gt, pred) in pairs {
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                let (g, p) = (gt.get(x, y) as usize, pred.get(x, y) as usize);
                for (c, counts) in out.iter_mut().enumerate() {
                    let slot = match (g == c, p == c) {
                        (true, true) => 0,
                        (false, true) => 1,
                        (true, false) => 2,
                        (false, false) => 3,
                    };
                    counts[slot] += 1;
                }
            }
        }
    }
    out
}

fn div(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

fn oracle_mismatches(pairs: &[(MaskImage, MaskImage)], acc: &ConfusionAccumulator) -> Vec<String> {
    let b = brute_counts(pairs);
    let mut bad = Vec::new();
    let mut check = |what: String, got: Option<f64>, want: Option<f64>| {
        if got != want {
            bad.push(format!("{what}: toolkit {got:?}, oracle {want:?}"));
        }
    };
    let mut dices = Vec::new();
    let mut ious = Vec::new();
    for class in LesionClass::ALL {
        let [tp, fp, fn_, _] = b[class.index() as usize];
        let d = div(2 * tp, 2 * tp + fp + fn_);
        let j = div(tp, tp + fp + fn_);
        check(format!("dice {}", class.name()), dice(acc, class), d);
        check(format!("iou {}", class.name()), iou(acc, class), j);
        if class.is_lesion() {
            dices.push(d);
            ious.push(j);
        }
    }
    let lesion = |k: usize| (1..NUM_CLASSES).map(|c| b[c][k]).sum::<u64>();
    let (tp, fp, fn_) = (lesion(0), lesion(1), lesion(2));
    let tpr = div(tp, tp + fn_);
    let ppv = div(tp, tp + fp);
    let micro = micro_pixel_metrics(acc);
    check("micro tpr".into(), micro.tpr, tpr);
    check("micro ppv".into(), micro.ppv, ppv);
    let f1 = match (tpr, ppv) {
        (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
        _ => None,
    };
    check("micro f1".into(), micro.f1, f1);
    // background pixels: predicted background vs predicted as a lesion
    let [bg_tp, _, bg_fn, _] = b[0];
    check("tn_rate".into(), tn_rate(acc), div(bg_tp, bg_tp + bg_fn));
    let report = MetricReport::from_accumulator(acc, provenance(), true);
    let mean = |v: &[Option<f64>]| {
        let defined: Vec<f64> = v.iter().flatten().copied().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    check("mean dice".into(), report.mean_dice, mean(&dices));
    check("mean iou".into(), report.mean_iou, mean(&ious));
    bad
}

fn provenance() -> lesionbench::metrics::Provenance {
    lesionbench::metrics::Provenance {
        label: "oracle".into(),
        architecture: None,
        config_digest: None,
        aggregation: "pooled-pixels".into(),
        pixel_metrics: "micro".into(),
    }
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> MaskImage {
    // bias towards background so that empty classes occur
    let labels = (0..w * h)
        .map(|_| if rng.random_bool(0.4) { 0 } else { rng.random_range(0..NUM_CLASSES as u8) })
        .collect();
    MaskImage::new(w, h, labels).unwrap()
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_200_601);
    let mut failures = Vec::new();
    let mut pooled_pairs = Vec::new();
    let mut pooled = ConfusionAccumulator::new();
    for i in 0..1000 {
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let pair = (random_mask(&mut rng, w, h), random_mask(&mut rng, w, h));
        let acc = ConfusionAccumulator::new().accumulated(&pair.0, &pair.1).unwrap();
        for m in oracle_mismatches(std::slice::from_ref(&pair), &acc) {
            failures.push(format!("pair {i}: {m}"));
        }
        pooled.accumulate(&pair.0, &pair.1).unwrap();
        pooled_pairs.push(pair);
    }
    failures.extend(oracle_mismatches(&pooled_pairs, &pooled).into_iter().map(|m| format!("pooled: {m}")));
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(10) {
        failures.push(format!("runtime {:.1}s exceeds 10s", elapsed.as_secs_f64()));
    }
    failures.truncate(10);
    verdict(1, "metric oracle equivalence on 1000 random mask pairs", &failures, elapsed);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_published_arithmetic() {
    let _g = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    for (name, table) in [("dice", &TABLE_II_DICE), ("iou", &TABLE_III_IOU)] {
        for row in table.iter() {
            let mean = mean_defined(row.values.iter().map(|v| Some(*v))).unwrap();
            if (mean - row.mean).abs() > 0.001 {
                failures.push(format!("{} mean {name}: recomputed {mean:.4}, published {}", row.architecture, row.mean));
            }
        }
    }
    for row in &TABLE_I {
        let f1 = f1_from_rates(row.tpr, row.ppv).unwrap();
        if (f1 - row.f1).abs() > 0.001 {
            failures.push(format!("{} f1: recomputed {f1:.4}, published {}", row.architecture, row.f1));
        }
    }
    let published = lesionbench::reference::published_reports();
    let by_arch = |a: Architecture| published.iter().find(|r| r.provenance.architecture.as_deref() == Some(a.as_str())).unwrap();
    for claim in IMPROVEMENT_CLAIMS {
        let a = by_arch(claim.leader).metric(claim.metric).unwrap();
        let b = by_arch(claim.other).metric(claim.metric).unwrap();
        let pct = 100.0 * relative_improvement(a, b).unwrap();
        if (pct - claim.percent).abs() > 0.05 {
            failures.push(format!(
                "{} over {} on {}: {pct:.2}%, published {}%",
                claim.leader, claim.other, claim.metric, claim.percent
            ));
        }
    }
    verdict(2, "published arithmetic (means, F1, six relative improvements)", &failures, start.elapsed());
}

// ---------------------------------------------------------------- 3

/// Per-dataset (OCT total, OCT train, fundus total, fundus train) as
/// stated in the dataset descriptions.
const STATED_COUNTS: [(DatasetId, u64, u64, u64, u64); 7] = [
    (DatasetId::RabbaniI, 4_241, 1_061, 148, 37),
    (DatasetId::RabbaniII, 12_800, 0, 100, 0),
    (DatasetId::DukeI, 38_400, 300, 0, 0),
    (DatasetId::DukeII, 610, 305, 0, 0),
    (DatasetId::DukeIII, 3_231, 3_048, 0, 0),
    (DatasetId::Biomisa, 5_324, 1_299, 115, 29),
    (DatasetId::Zhang, 109_309, 108_309, 0, 0),
];

#[test]
fn criterion_3_split_accounting() {
    let _g = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let manifest = registry_manifest();
    let audit = audit_splits(&manifest);
    if !audit.pass {
        failures.push("conforming manifest does not pass the audit".into());
    }
    for (id, oct, oct_train, fundus, fundus_train) in STATED_COUNTS {
        let recs = manifest.filter(|r| r.dataset_id == id);
        let n = |modality: &str, split: Option<Split>| {
            recs.records()
                .iter()
                .filter(|r| r.modality.as_str().eq_ignore_ascii_case(modality) && split.is_none_or(|s| r.split == s))
                .count() as u64
        };
        let got = (n("oct", None), n("oct", Some(Split::Train)), n("fundus", None), n("fundus", Some(Split::Train)));
        if got != (oct, oct_train, fundus, fundus_train) {
            failures.push(format!("{id}: counted {got:?}, stated ({oct}, {oct_train}, {fundus}, {fundus_train})"));
        }
    }
    let t = audit.actual_total;
    let totals = (t.fundus_count(), t.oct_count(), t.fundus_test, t.oct_test);
    if totals != (363, 173_915, 297, 59_593) {
        failures.push(format!("totals (fundus, OCT, fundus test, OCT test) = {totals:?}"));
    }
    // single-record mutations: drop, duplicate under a new id, flip split,
    // change dataset, change modality
    let records = manifest.records();
    let base = manifest.base_dir().to_path_buf();
    let mut mutants: Vec<(String, Vec<_>)> = Vec::new();
    for &i in &[0usize, records.len() / 2, records.len() - 1] {
        let mut v = records.to_vec();
        v.remove(i);
        mutants.push((format!("drop #{i}"), v));
        let mut v = records.to_vec();
        let mut extra = records[i].clone();
        extra.scan_id.push_str("-extra");
        v.push(extra);
        mutants.push((format!("add copy of #{i}"), v));
        let mut v = records.to_vec();
        v[i].split = if v[i].split == Split::Train { Split::Test } else { Split::Train };
        mutants.push((format!("flip split of #{i}"), v));
        let mut v = records.to_vec();
        v[i].dataset_id = if v[i].dataset_id == DatasetId::Zhang { DatasetId::DukeI } else { DatasetId::Zhang };
        mutants.push((format!("move #{i} to another dataset"), v));
        let mut v = records.to_vec();
        v[i].modality = match v[i].modality {
            lesionbench::record::Modality::Oct => lesionbench::record::Modality::Fundus,
            lesionbench::record::Modality::Fundus => lesionbench::record::Modality::Oct,
        };
        mutants.push((format!("switch modality of #{i}"), v));
    }
    for (what, v) in mutants {
        let m = DatasetManifest::from_records(v, base.clone()).unwrap();
        if audit_splits(&m).pass {
            failures.push(format!("mutation not detected: {what}"));
        }
    }
    verdict(3, "split accounting and mutation detection", &failures, start.elapsed());
}

// ---------------------------------------------------------------- 4

fn compact(arch: Architecture, hw: usize) -> ModelSpec {
    ModelSpec::with_backbone(arch, [hw, hw], BackboneSpec::compact())
}

fn input(n: usize, hw: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f32> = (0..n * 3 * hw * hw).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(v, (n, 3, hw, hw), &Device::Cpu).unwrap()
}

fn zero_params(model: &SegmentationModel, prefix: &str) {
    for p in model.store().params().iter().filter(|p| p.name.starts_with(prefix)) {
        let z = Tensor::zeros(p.var.dims(), p.var.dtype(), &Device::Cpu).unwrap();
        model.store().set(&p.name, &z).unwrap();
    }
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    (a - b)
        .unwrap()
        .abs()
        .unwrap()
        .max_all()
        .unwrap()
        .to_dtype(DType::F64)
        .unwrap()
        .to_scalar::<f64>()
        .unwrap()
}

/// In every 2×2 window of every unpooled map at most one entry is nonzero,
/// and it sits at the recorded argmax position.
fn segnet_sparsity(model: &SegmentationModel, x: &Tensor) -> Result<(), String> {
    let taps = model.encoder().forward(x, false).map_err(|e| e.to_string())?;
    let Head::SegNet(dec) = model.head() else { return Err("not a SegNet head".into()) };
    let (_, sparse) = dec.forward_trace(&taps, false).map_err(|e| e.to_string())?;
    if sparse.len() != taps.pools.len() {
        return Err(format!("{} unpooled maps for {} pools", sparse.len(), taps.pools.len()));
    }
    for (map, record) in sparse.iter().zip(taps.pools.iter().rev()) {
        let (b, c, h, w) = map.dims4().unwrap();
        let vals = map.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let idx = record.indices.to_dtype(DType::U32).unwrap().flatten_all().unwrap().to_vec1::<u32>().unwrap();
        for plane in 0..b * c {
            for wy in 0..h / 2 {
                for wx in 0..w / 2 {
                    let recorded = idx[plane * (h / 2) * (w / 2) + wy * (w / 2) + wx] as usize;
                    for k in 0..4 {
                        let v = vals[plane * h * w + (2 * wy + k / 2) * w + 2 * wx + k % 2];
                        if v != 0.0 && k != recorded {
                            return Err(format!("nonzero off the recorded position in a {h}x{w} map"));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn taps_with_perturbed_shallow(taps: &EncoderTaps) -> EncoderTaps {
    let mut t = taps.clone();
    let f0 = &t.features[0];
    t.features[0] = (f0 + Tensor::ones(f0.dims(), f0.dtype(), &Device::Cpu).unwrap()).unwrap();
    t
}

/// Measured for the record; the threshold is fixed.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[test]
fn criterion_4_architecture_contracts() {
    let _g = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    for hw in [64, 96] {
        for arch in Architecture::ALL {
            let model = build(&compact(arch, hw), 3).unwrap();
            let y = model.forward(&input(2, hw, hw as u64)).unwrap();
            if y.dims() != [2, NUM_CLASSES, hw, hw] {
                failures.push(format!("{arch} at {hw}: output {:?}", y.dims()));
            }
        }
    }

    let segnet = build(&compact(Architecture::SegNet, 64), 5).unwrap();
    if let Err(e) = segnet_sparsity(&segnet, &input(2, 64, 11)) {
        failures.push(format!("SegNet sparsity: {e}"));
    }

    let x = input(2, 64, 12);
    let fcn8 = build(&compact(Architecture::Fcn8, 64), 9).unwrap();
    let fcn32 = build(&compact(Architecture::Fcn32, 64), 9).unwrap();
    zero_params(&fcn8, "decoder.score16");
    zero_params(&fcn8, "decoder.score8");
    let d = max_abs_diff(&fcn8.forward(&x).unwrap(), &fcn32.forward(&x).unwrap());
    if d != 0.0 {
        failures.push(format!("FCN-8 with zeroed skips differs from FCN-32 by {d:e}"));
    }

    let rag = build(&compact(Architecture::RagNet, 64), 13).unwrap();
    let Head::RagNet(dec) = rag.head() else { unreachable!() };
    let taps = rag.encoder().forward(&x, false).unwrap();
    let moved = taps_with_perturbed_shallow(&taps);
    let run = |t: &EncoderTaps| rag_decoder(t, dec, false).unwrap();
    let sensitivity = max_abs_diff(&run(&taps), &run(&moved));
    let full = rag.forward(&x).unwrap();
    zero_params(&rag, "decoder.lateral1");
    let ablated = rag.forward(&x).unwrap();
    let ablated_sensitivity = max_abs_diff(&run(&taps), &run(&moved));
    let ablation_effect = max_abs_diff(&full, &ablated);
    if sensitivity < 1e-4 || ablation_effect < 1e-4 {
        failures.push(format!(
            "RAGNet ignores its stride-4 skip (sensitivity {sensitivity:e}, ablation effect {ablation_effect:e})"
        ));
    }
    if ablated_sensitivity != 0.0 {
        failures.push(format!("RAGNet with lateral1 ablated still reacts to the stride-4 tap ({ablated_sensitivity:e})"));
    }

    for f in decoder_fragments(17).unwrap() {
        let r = gradcheck(&f, 24).unwrap();
        say(&format!("    gradcheck {}: max relative error {:.3e} over {} entries", r.fragment, r.max_rel_error, r.checked));
        if r.max_rel_error.is_nan() || r.max_rel_error >= GRADCHECK_TOLERANCE {
            failures.push(format!("gradcheck {}: {:.3e}", r.fragment, r.max_rel_error));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        failures.push(format!("runtime {:.0}s exceeds 5 min", elapsed.as_secs_f64()));
    }
    verdict(4, "architecture contracts (shapes, sparsity, zero-branch, skip ablation, gradcheck)", &failures, elapsed);
}

// ---------------------------------------------------------------- 5

const OVERFIT_STEPS: usize = 300;

fn overfit_threshold(arch: Architecture) -> f64 {
    match arch {
        Architecture::Fcn8 | Architecture::Fcn32 => 0.85,
        _ => 0.95,
    }
}

fn fixture(dir: &Path) -> DatasetManifest {
    synth_fixture(&SynthSpec::new(4, (64, 64), 7), dir).unwrap()
}

fn overfit_config(arch: Architecture, epochs: usize) -> RunConfig {
    RunConfig::new(arch, [64, 64], epochs, "", "")
        .unwrap()
        .with_backbone("compact")
        .unwrap()
        .with_batch_size(4)
        .unwrap()
}

#[test]
fn criterion_5_overfit_sanity() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let mut failures = Vec::new();
    for arch in Architecture::ALL {
        let t0 = Instant::now();
        // one batch holds all four scans, so epochs equal optimizer steps
        let outcome = train(&overfit_config(arch, OVERFIT_STEPS), &manifest).unwrap();
        let report = evaluate(&outcome.state.model, &manifest, arch.display_name()).unwrap();
        let dice = report.mean_dice.unwrap_or(0.0);
        let secs = t0.elapsed().as_secs_f64();
        let need = overfit_threshold(arch);
        say(&format!("    {arch}: mean dice {dice:.4} (need {need}) after {} steps in {secs:.0}s", outcome.state.step));
        if dice < need {
            failures.push(format!("{arch}: mean dice {dice:.4} < {need}"));
        }
        if secs > 15.0 * 60.0 {
            failures.push(format!("{arch}: {secs:.0}s exceeds 15 min"));
        }
    }
    verdict(5, "overfit sanity on the 4-scan fixture", &failures, start.elapsed());
}

// ---------------------------------------------------------------- 6

fn two_group_manifest(dir: &Path) -> DatasetManifest {
    let spec = |id: DatasetId, prefix: &str, seed| {
        SynthSpec::new(4, (32, 32), seed)
            .dataset(id)
            .split(SplitPolicy::EveryNthTest(2))
            .id_prefix(prefix)
    };
    let a = synth_fixture(&spec(DatasetId::RabbaniI, "r", 1), &dir.join("r")).unwrap();
    let b = synth_fixture(&spec(DatasetId::DukeII, "d", 2), &dir.join("d")).unwrap();
    let rebase = |m: &DatasetManifest, sub: &str| {
        m.records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.image_ref = Path::new(sub).join(&r.image_ref);
                r.mask_ref = r.mask_ref.as_ref().map(|p| Path::new(sub).join(p));
                r
            })
            .collect::<Vec<_>>()
    };
    let mut records = rebase(&a, "r");
    records.extend(rebase(&b, "d"));
    DatasetManifest::from_records(records, dir).unwrap()
}

fn small_grid() -> GridConfig {
    let run = RunConfig::new(Architecture::Fcn8, [32, 32], 2, "", "")
        .unwrap()
        .with_backbone("compact")
        .unwrap()
        .with_batch_size(2)
        .unwrap();
    GridConfig::new(
        run,
        vec![Pair::new(GroupId::R, GroupId::D), Pair::new(GroupId::D, GroupId::R)],
        vec![Architecture::Fcn8, Architecture::Fcn32],
        42,
    )
}

#[test]
fn criterion_6_transfer_grid() {
    let _g = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let data = tempfile::tempdir().unwrap();
    let manifest = two_group_manifest(data.path());
    let grid = small_grid();

    let straight = tempfile::tempdir().unwrap();
    let full = run_grid(&grid, &manifest, straight.path()).unwrap();
    if full.matrix.cells.len() != 4 || full.trained != 4 {
        failures.push(format!("uninterrupted run: {} cells, {} trained", full.matrix.cells.len(), full.trained));
    }

    let resumed = tempfile::tempdir().unwrap();
    let mut interrupted = grid.clone();
    interrupted.max_new_cells = Some(1);
    let first = run_grid(&interrupted, &manifest, resumed.path()).unwrap();
    if first.pending != 3 || resumed.path().join(MATRIX_JSON).exists() {
        failures.push("interrupted run wrote a matrix or lost track of pending cells".into());
    }
    let second = run_grid(&grid, &manifest, resumed.path()).unwrap();
    if second.reused != 1 || second.trained != 3 {
        failures.push(format!("resume reused {} and trained {}", second.reused, second.trained));
    }
    for file in [MATRIX_JSON, MATRIX_TSV] {
        let a = fs::read(straight.path().join(file)).unwrap();
        let b = fs::read(resumed.path().join(file)).unwrap();
        if a != b {
            let (a, b) = (String::from_utf8_lossy(&a), String::from_utf8_lossy(&b));
            let first = a.lines().zip(b.lines()).find(|(x, y)| x != y);
            failures.push(format!("{file} differs between uninterrupted and resumed runs: {first:?}"));
        }
    }

    let zd = TABLE_IV.iter().find(|r| r.pair == Pair::new(GroupId::Z, GroupId::D)).unwrap();
    let ranking = rank_values(zd.pair, &Architecture::ALL.into_iter().zip(zd.values).collect::<Vec<_>>());
    let want = [
        Architecture::RagNet,
        Architecture::PspNet,
        Architecture::UNet,
        Architecture::SegNet,
        Architecture::Fcn8,
        Architecture::Fcn32,
    ];
    if ranking.order != want || ranking.order[0] != zd.best || ranking.order[1] != zd.second {
        failures.push(format!("Z->D ranking {:?}", ranking.order));
    }
    let published = lesionbench::reference::published_matrix();
    for row in &TABLE_IV {
        let r = rank_row(&published, row.pair).unwrap();
        if r.order[0] != row.best || r.order[1] != row.second {
            failures.push(format!("{}: ranked {:?}/{:?}, marked {:?}/{:?}", row.pair, r.order[0], r.order[1], row.best, row.second));
        }
    }
    let tsv = table_iv_tsv(&published);
    if !tsv.lines().any(|l| l.starts_with("Z→D\t0.809*\t0.752+")) {
        failures.push("Z→D row of the emitted table lacks the best/second marks".into());
    }
    verdict(6, "transfer grid cardinality, resume and ranking", &failures, start.elapsed());
}

// ---------------------------------------------------------------- 7

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest = fixture(&dir.join("data"));
    let config = overfit_config(Architecture::RagNet, 4).with_seed(77);
    let mut trainer = Trainer::new(&config, &manifest).unwrap();
    trainer.run_epochs(config.epochs).unwrap();
    let ckpt = dir.join("model.safetensors");
    save_checkpoint(trainer.state(), Some(&config), &ckpt).unwrap();
    let model = &trainer.state().model;
    let mut out = vec![("checkpoint".to_string(), fs::read(&ckpt).unwrap())];
    for r in manifest.records() {
        let m = predict(model, &manifest.image_path(r)).unwrap();
        out.push((format!("prediction {}", r.scan_id), m.labels().to_vec()));
    }
    let report = evaluate(model, &manifest, "RAGNet").unwrap();
    let written = emit_tables(&[report], None, &dir.join("report")).unwrap();
    for p in written {
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
    }
    out
}

#[test]
fn criterion_7_determinism() {
    let _g = serial();
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let mut failures = Vec::new();
    if first.len() != second.len() {
        failures.push("runs produced different artifact sets".into());
    }
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        if x != y {
            failures.push(format!("{name} differs"));
        }
    }
    verdict(7, "train -> predict -> report is bit-reproducible", &failures, start.elapsed());
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_tn_rate_harness() {
    let _g = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let healthy = synth_fixture(&SynthSpec::new(3, (64, 64), 5).healthy(true).id_prefix("h"), dir.path()).unwrap();

    let model = build(&compact(Architecture::Fcn32, 64), 21).unwrap();
    let report = fp_experiment(&model, &healthy).unwrap();
    let (mut tn, mut fp) = (0u64, 0u64);
    for r in healthy.records() {
        let pred = predict(&model, &healthy.image_path(r)).unwrap();
        for &l in pred.labels() {
            if l == 0 {
                tn += 1;
            } else {
                fp += 1;
            }
        }
    }
    let oracle = tn as f64 / (tn + fp) as f64;
    if report.tn_rate != Some(oracle) {
        failures.push(format!("tn_rate {:?}, pixel-count oracle {oracle} ({tn} TN, {fp} FP)", report.tn_rate));
    }

    let quiet = build(&compact(Architecture::Fcn32, 64), 21).unwrap();
    zero_params(&quiet, "decoder.score32.weight");
    let bias = Tensor::from_vec(vec![1.0f32, 0.0, 0.0, 0.0, 0.0, 0.0], NUM_CLASSES, &Device::Cpu).unwrap();
    quiet.store().set("decoder.score32.bias", &bias).unwrap();
    let r = fp_experiment(&quiet, &healthy).unwrap();
    if r.tn_rate != Some(1.0) {
        failures.push(format!("all-background model scored {:?}", r.tn_rate));
    }
    verdict(8, "healthy-set TN rate matches the pixel-count oracle", &failures, start.elapsed());
}
