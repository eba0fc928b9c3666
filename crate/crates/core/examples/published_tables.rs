//! Writes the published result tables as TSV and prints a few comparisons.
//!
//!     cargo run --example published_tables -- out/

use std::path::PathBuf;

use lesionbench::reference::{published_matrix, published_reports};
use lesionbench::report::{compare, emit_tables};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("lesionbench-tables"), PathBuf::from);
    let reports = published_reports();
    let matrix = published_matrix();
    for path in emit_tables(&reports, Some(&matrix), &out)? {
        println!("== {}", path.display());
        if path.extension().is_some_and(|e| e == "tsv") {
            print!("{}", std::fs::read_to_string(&path)?);
        }
    }
    let by_label = |l: &str| reports.iter().find(|r| r.label() == l).expect("published row");
    for (a, b, metric) in [("RAGNet", "UNet", "tpr"), ("RAGNet", "PSPNet", "f1"), ("RAGNet", "FCN-32", "mean_dice")] {
        println!("{}", compare(by_label(a), by_label(b), metric)?.summary);
    }
    Ok(())
}
