//! Trains one fold of a stratified split, prints the epoch log, evaluates
//! the best snapshot and round-trips it through a checkpoint.
//!
//! `cargo run --release --example train_single_fold -- [samples] [fold]`

use mambakick::data::{generate_synthetic, stratified_kfold, LabelSpace, SyntheticConfig};
use mambakick::metrics::evaluate;
use mambakick::metrics::export::{confusion_text, subgroup_table};
use mambakick::train::{train_model, BranchOptions, Checkpoint, TrainConfig};

fn main() -> mambakick::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let fold = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let ds = generate_synthetic(&SyntheticConfig { num_samples: samples, noise_std: 0.5, seed: 3, ..Default::default() })?;
    let cfg = TrainConfig { seed: 3, max_epochs: 30, ..Default::default() };
    let ids: Vec<String> = ds.samples.iter().map(|s| s.id.clone()).collect();
    let split = stratified_kfold(&ids, &ds.labels()?, 3, cfg.folds, cfg.seed)?;
    let (train, val) = (ds.subset(&split.train_indices(fold)), ds.subset(&split.val_indices(fold)));
    println!("fold {fold}: {} train / {} val", train.len(), val.len());

    let out = train_model(&train, &val, &cfg, BranchOptions::default(), cfg.seed + fold as u64)?;
    let h = &out.history;
    print!("{}", h.to_tsv());
    println!(
        "{} updates ({} warmup), best epoch {} at {:.4}, stopped after {}",
        h.steps.len(),
        h.warmup_steps,
        h.best_epoch,
        h.best_val_accuracy,
        h.stopped_epoch()
    );

    let eval = evaluate(&out.model, &val.samples, LabelSpace::ThreeClass)?;
    let names = LabelSpace::ThreeClass.class_names();
    println!("\n{}", confusion_text(&eval.confusion, &names));
    println!("{}", subgroup_table(&eval.subgroups));

    let path = std::env::temp_dir().join(format!("mambakick_fold_{fold}.json"));
    let ck = Checkpoint { version: mambakick::train::checkpoint::CHECKPOINT_VERSION, fold: Some(fold), config: cfg, model: out.model, optimizer: out.optimizer, history: out.history };
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;
    assert_eq!(back, ck);
    println!("checkpoint written to {}", path.display());
    Ok(())
}
