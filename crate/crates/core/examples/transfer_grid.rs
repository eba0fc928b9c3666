//! Runs a small cross-dataset grid on two synthetic dataset groups, stops
//! it after one cell, then resumes it to completion.
//!
//!     cargo run --release --example transfer_grid -- out/

use std::path::{Path, PathBuf};

use lesionbench::config::{Architecture, RunConfig};
use lesionbench::datasets::{synth_fixture, DatasetManifest, GroupId, SplitPolicy, SynthSpec};
use lesionbench::record::DatasetId;
use lesionbench::report::table_iv_tsv;
use lesionbench::transfer::{run_grid, GridConfig, Pair};

fn synthetic_groups(dir: &Path) -> lesionbench::Result<DatasetManifest> {
    let mut records = Vec::new();
    for (id, sub, seed) in [(DatasetId::RabbaniI, "r", 1), (DatasetId::DukeII, "d", 2)] {
        let spec = SynthSpec::new(4, (32, 32), seed).dataset(id).split(SplitPolicy::EveryNthTest(2)).id_prefix(sub);
        for mut r in synth_fixture(&spec, &dir.join(sub))?.records().to_vec() {
            r.image_ref = Path::new(sub).join(&r.image_ref);
            r.mask_ref = r.mask_ref.map(|p| Path::new(sub).join(p));
            records.push(r);
        }
    }
    DatasetManifest::from_records(records, dir)
}

fn main() -> lesionbench::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("lesionbench-grid"), PathBuf::from);
    let manifest = synthetic_groups(&out.join("data"))?;
    let run = RunConfig::new(Architecture::Fcn8, [32, 32], 2, "", "")?.with_backbone("compact")?.with_batch_size(2)?;
    let mut grid = GridConfig::new(
        run,
        vec![Pair::new(GroupId::R, GroupId::D), Pair::new(GroupId::D, GroupId::R)],
        vec![Architecture::Fcn8, Architecture::Fcn32],
        42,
    );

    grid.max_new_cells = Some(1);
    let first = run_grid(&grid, &manifest, &out.join("grid"))?;
    println!("first pass: trained {}, pending {}", first.trained, first.pending);

    grid.max_new_cells = None;
    let second = run_grid(&grid, &manifest, &out.join("grid"))?;
    println!("resumed: reused {}, trained {}", second.reused, second.trained);
    print!("{}", table_iv_tsv(&second.matrix));
    Ok(())
}
