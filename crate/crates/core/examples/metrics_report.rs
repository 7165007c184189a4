//! Metrics from raw predictions: confusion matrix, per-class scores,
//! metadata subgroups, the goalkeeper baseline and an SVG rendering.
//!
//! `cargo run --example metrics_report -- [out.svg]`

use mambakick::data::{generate_synthetic, LabelSpace, SyntheticConfig};
use mambakick::metrics::export::{confusion_svg, confusion_text, report_kv, results_table, subgroup_table, ResultRow};
use mambakick::metrics::{gk_baseline, subgroup_report, ConfusionMatrix, MeanMetrics, MetricReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mambakick::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("confusion.svg"));
    let space = LabelSpace::ThreeClass;
    let names = space.class_names();
    let ds = generate_synthetic(&SyntheticConfig { num_samples: 622, ..Default::default() })?;
    let truth = ds.labels()?;

    // a predictor that is right 70% of the time and guesses otherwise
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let preds: Vec<usize> = truth.iter().map(|&t| if rng.random_bool(0.7) { t } else { rng.random_range(0..3) }).collect();

    let cm = ConfusionMatrix::from_predictions(3, &truth, &preds)?;
    let report = MetricReport::from_confusion(&cm, &names)?;
    println!("{}", confusion_text(&cm, &names));
    print!("{}", report_kv("model", &report));

    let metas: Vec<_> = ds.samples.iter().map(|s| s.meta).collect();
    println!("\n{}", subgroup_table(&subgroup_report(&metas, &truth, &preds)?));

    let (_, gk) = gk_baseline(&ds.samples, space)?;
    let rows = [
        ResultRow::goalkeeper(MeanMetrics::single(&gk)),
        ResultRow { architecture: "noisy oracle".into(), best_model: "-".into(), reference: "-".into(), metrics: MeanMetrics::single(&report) },
    ];
    println!("{}", results_table(&rows));

    std::fs::write(&out, confusion_svg(&cm, &names, "noisy oracle"))?;
    println!("svg written to {}", out.display());
    Ok(())
}
