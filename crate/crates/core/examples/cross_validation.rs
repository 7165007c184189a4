//! Ten-fold cross-validation on a planted-signal synthetic set, in the
//! three-class and two-class label spaces.
//!
//! `cargo run --release --example cross_validation -- [samples] [jobs]`

use std::time::Instant;

use mambakick::data::{generate_synthetic, LabelSpace, SyntheticConfig};
use mambakick::experiment::{crossval_text, cross_validate, CrossValOptions};
use mambakick::train::TrainConfig;

fn main() -> mambakick::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let jobs = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let ds = generate_synthetic(&SyntheticConfig { num_samples: samples, noise_std: 0.0, seed: 7, ..Default::default() })?;
    let cfg = TrainConfig { seed: 7, ..Default::default() };
    for space in [LabelSpace::ThreeClass, LabelSpace::TwoClass] {
        let t = Instant::now();
        let run = cross_validate(&ds, &cfg, CrossValOptions { label_space: space, jobs, ..Default::default() })?;
        println!("{}", crossval_text(&run.summary));
        println!("elapsed {:.1}s\n", t.elapsed().as_secs_f64());
    }
    Ok(())
}
