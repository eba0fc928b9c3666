//! Trains one architecture on the 4-scan synthetic fixture and reports how
//! well it memorised it.
//!
//!     cargo run --example overfit -- UNet 300

use std::time::Instant;

use lesionbench::config::{Architecture, RunConfig};
use lesionbench::datasets::{synth_fixture, SynthSpec};
use lesionbench::engine::{evaluate, Trainer};

fn main() -> lesionbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let arch: Architecture = args.next().as_deref().unwrap_or("UNet").parse()?;
    let steps: usize = args.next().map_or(300, |s| s.parse().expect("step count"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let dir = std::env::temp_dir().join(format!("lesionbench-overfit-{}", std::process::id()));
    let manifest = synth_fixture(&SynthSpec::new(4, (64, 64), 7), &dir)?;
    let config = RunConfig::new(arch, [64, 64], steps, "", "")?
        .with_backbone("compact")?
        .with_batch_size(4)?
        .with_seed(seed);

    let start = Instant::now();
    let mut trainer = Trainer::new(&config, &manifest)?;
    for _ in 0..steps {
        let e = trainer.run_epoch()?;
        if e.epoch % 50 == 0 || e.epoch == 1 {
            let report = evaluate(&trainer.state().model, &manifest, arch.display_name())?;
            println!(
                "step {:4}  loss {:.4}  mean dice {:.4}  ({:.0}s)",
                e.epoch,
                e.mean_loss,
                report.mean_dice.unwrap_or(0.0),
                start.elapsed().as_secs_f64()
            );
        }
    }
    let report = evaluate(&trainer.state().model, &manifest, arch.display_name())?;
    for s in report.per_class.iter().filter(|s| s.class.is_lesion()) {
        println!("  {:7} dice {:.4}", s.class.name(), s.dice.unwrap_or(f64::NAN));
    }
    println!("{}: mean dice {:.4} after {steps} steps", arch.display_name(), report.mean_dice.unwrap_or(0.0));
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
