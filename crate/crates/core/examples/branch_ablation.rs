//! Branch-removal study: Running, Running + Kicking, and all three
//! branches, cross-validated in both label spaces. The run directory is
//! written in the same layout the `ablate` command produces.
//!
//! `cargo run --release --example branch_ablation -- [samples] [out_dir]`

use mambakick::data::{generate_synthetic, LabelSpace, SyntheticConfig};
use mambakick::experiment::{run_ablation, write_ablation};
use mambakick::metrics::export::ablation_table;
use mambakick::model::{BranchSet, Exclusion};
use mambakick::train::TrainConfig;

fn main() -> mambakick::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(600);
    let out = args.next().map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mambakick_ablation"));

    // noisy embeddings, and metadata that carries part of the label
    let ds = generate_synthetic(&SyntheticConfig {
        num_samples: samples,
        dim: 8,
        noise_std: 1.0,
        metadata_signal: 0.5,
        seed: 7,
        ..Default::default()
    })?;
    let cfg = TrainConfig { seed: 7, layers: 1, state_size: 4, meta_dim: 8, fusion_hidden: 32, ..Default::default() };
    let spaces = [LabelSpace::ThreeClass, LabelSpace::TwoClass];
    let (summary, runs) = run_ablation(&ds, &cfg, &spaces, &BranchSet::ABLATION_ROWS, Exclusion::ZeroInput, 1)?;

    let rows: Vec<_> = summary.entries.iter().map(|e| e.row()).collect();
    println!("{}", ablation_table(&rows));
    write_ablation(&out, &cfg, "synthetic", &summary, &runs)?;
    println!("run directory: {}", out.display());
    Ok(())
}
