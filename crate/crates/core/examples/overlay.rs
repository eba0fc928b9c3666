//! Trains briefly on the synthetic fixture and writes colour overlays of
//! prediction and ground truth for every scan.
//!
//!     cargo run --release --example overlay -- out/

use std::path::PathBuf;

use lesionbench::classmap::default_class_map;
use lesionbench::config::{Architecture, RunConfig};
use lesionbench::datasets::{synth_fixture, SynthSpec};
use lesionbench::engine::data::{image_tensor, load_rgb, load_target};
use lesionbench::engine::{predict_tensor, train};
use lesionbench::report::render_overlay;

fn main() -> lesionbench::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("lesionbench-overlay"), PathBuf::from);
    let manifest = synth_fixture(&SynthSpec::new(4, (64, 64), 7), &out.join("data"))?;
    let config = RunConfig::new(Architecture::RagNet, [64, 64], 60, "", "")?.with_backbone("compact")?.with_batch_size(4)?;
    let model = train(&config, &manifest)?.state.model;
    let cmap = default_class_map();
    for record in manifest.records() {
        let rgb = load_rgb(&manifest.image_path(record))?;
        let dims = (rgb.width() as usize, rgb.height() as usize);
        let pred = predict_tensor(&model, &image_tensor(&rgb, config.input_size)?, dims)?;
        let gt = load_target(&manifest, record, dims)?;
        for (tag, mask) in [("RAGNet", &pred), ("ground_truth", &gt)] {
            let path = out.join(format!("{}_{tag}.png", record.scan_id));
            render_overlay(&rgb, mask, &cmap, 0.5)?.save(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
