//! Generates a planted-signal dataset, writes it in the binary format,
//! reads it back and shows the two-class view.
//!
//! `cargo run --example synthetic_dataset -- [out.mkds] [samples] [seed]`

use mambakick::data::{binarize, generate_synthetic, load_dataset, manifest_sidecar, save_dataset, SyntheticConfig};

fn main() -> mambakick::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synthetic.mkds"));
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(622);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = SyntheticConfig { num_samples: samples, seed, ..Default::default() };
    let ds = generate_synthetic(&cfg)?;
    save_dataset(&out, &ds)?;
    let back = load_dataset(&out)?;
    assert_eq!(back, ds);

    print!("{}", manifest_sidecar(&ds));
    println!("written to {} ({} bytes)", out.display(), std::fs::metadata(&out)?.len());
    println!("left/center/right = {:?}", ds.class_counts());

    if let Some(s) = ds.samples.first() {
        println!("\nfirst sample {}: label {}, pitch {:?}, foot {:?}, gk {:?}", s.id, s.label.name(), s.meta.pitch_side, s.meta.foot, s.gk_direction);
        let run = s.run.to_mat();
        for t in 0..run.rows {
            let head: Vec<String> = run.row(t).iter().take(6).map(|v| format!("{v:+.3}")).collect();
            println!("  run[{t}] {} ...", head.join(" "));
        }
    }

    let two = binarize(&ds);
    println!("\nbinarized: {} samples, left/right = {:?}", two.len(), two.class_counts());
    Ok(())
}
