//! Writes a cross-validation run directory, re-renders its reports as text
//! and SVG, and scores a reloaded fold checkpoint on the whole dataset.
//!
//! `cargo run --release --example run_directory -- [out_dir]`

use mambakick::data::{generate_synthetic, LabelSpace, SyntheticConfig};
use mambakick::experiment::{cross_validate, fold_dir, render_report, write_crossval, CrossValOptions, ReportFormat};
use mambakick::metrics::evaluate;
use mambakick::train::{Checkpoint, TrainConfig};

fn main() -> mambakick::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mambakick_run"));
    let ds = generate_synthetic(&SyntheticConfig { num_samples: 150, dim: 8, noise_std: 0.3, seed: 2, ..Default::default() })?;
    let cfg = TrainConfig { seed: 2, folds: 5, max_epochs: 15, layers: 1, state_size: 4, meta_dim: 8, fusion_hidden: 16, ..Default::default() };

    let run = cross_validate(&ds, &cfg, CrossValOptions::default())?;
    write_crossval(&out, &cfg, "synthetic", &run)?;
    for format in [ReportFormat::Text, ReportFormat::Svg] {
        for p in render_report(&out, format)? {
            println!("{}", p.display());
        }
    }
    println!("\n{}", std::fs::read_to_string(out.join("reports/results.txt"))?);

    let ck = Checkpoint::load(fold_dir(&out, 0).join("checkpoint.json"))?;
    let eval = evaluate(&ck.model, &ds.samples, LabelSpace::ThreeClass)?;
    println!(
        "fold 0 checkpoint (best epoch {}) on all {} samples: accuracy {:.4}",
        ck.history.best_epoch,
        ds.len(),
        eval.report.accuracy
    );
    Ok(())
}
