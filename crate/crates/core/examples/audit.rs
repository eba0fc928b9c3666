//! Audits the published split registry, then shows what a single misplaced
//! scan looks like in the report.
//!
//!     cargo run --example audit

use lesionbench::datasets::{audit_splits, registry_manifest, DatasetManifest};
use lesionbench::record::Split;

fn main() -> lesionbench::Result<()> {
    let manifest = registry_manifest();
    let report = audit_splits(&manifest);
    println!("{}", report.render_text());

    let mut records = manifest.records().to_vec();
    records[0].split = match records[0].split {
        Split::Train => Split::Test,
        Split::Test => Split::Train,
    };
    let moved = records[0].scan_id.clone();
    let tampered = DatasetManifest::from_records(records, manifest.base_dir())?;
    let report = audit_splits(&tampered);
    println!("after moving {moved} to the other split: pass = {}", report.pass);
    for row in report.failing_rows() {
        println!("  {} delta {:?}", row.dataset, row.delta);
    }
    Ok(())
}
