//! False-positive check on healthy scans: the fraction of background pixels
//! a model leaves as background, before and after a short training run.
//!
//!     cargo run --release --example healthy_fp -- RAGNet

use lesionbench::config::{Architecture, RunConfig};
use lesionbench::datasets::{synth_fixture, SynthSpec};
use lesionbench::engine::train;
use lesionbench::models::{build, ModelSpec};
use lesionbench::reference::TN_RATE_REFERENCE;
use lesionbench::transfer::fp_experiment;

fn main() -> lesionbench::Result<()> {
    let arch: Architecture = std::env::args().nth(1).as_deref().unwrap_or("RAGNet").parse()?;
    let dir = std::env::temp_dir().join(format!("lesionbench-fp-{}", std::process::id()));
    let lesions = synth_fixture(&SynthSpec::new(4, (64, 64), 7), &dir.join("lesions"))?;
    let healthy = synth_fixture(&SynthSpec::new(4, (64, 64), 8).healthy(true).id_prefix("h"), &dir.join("healthy"))?;

    let config = RunConfig::new(arch, [64, 64], 30, "", "")?.with_backbone("compact")?.with_batch_size(4)?;
    let untrained = build(&ModelSpec::from_config(&config)?, config.seed)?;
    let before = fp_experiment(&untrained, &healthy)?;
    let trained = train(&config, &lesions)?;
    let after = fp_experiment(&trained.state.model, &healthy)?;

    println!("{}: TN rate untrained {:.4}, after {} epochs {:.4}", arch.display_name(), before.tn_rate.unwrap_or(f64::NAN), config.epochs, after.tn_rate.unwrap_or(f64::NAN));
    for (a, v) in TN_RATE_REFERENCE {
        println!("published {}: {v}", a.display_name());
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
