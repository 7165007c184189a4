//! Draws a few augmented views of one sample and reports what each draw did,
//! then measures the empirical rates over many draws.
//!
//! `cargo run --release --example augmentation -- [draws]`

use mambakick::augment::{augment_traced, AugmentConfig};
use mambakick::data::{generate_synthetic, SyntheticConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mambakick::Result<()> {
    let draws: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let ds = generate_synthetic(&SyntheticConfig { num_samples: 1, run_len: 8, kick_len: 4, ..Default::default() })?;
    let sample = &ds.samples[0];
    let cfg = AugmentConfig::default();
    cfg.validate()?;
    println!("{cfg:#?}\n");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..5 {
        let (f, t) = augment_traced(sample, &cfg, &mut rng);
        println!("draw {i}: fired={}", t.fired);
        for (name, p) in [("run", &t.run), ("kick", &t.kick)] {
            println!(
                "  {name:<4} mask {:?} shift {:+} clips {:?} features {:?}",
                p.mask, p.shift, p.dropped_clips, p.dropped_features
            );
        }
        println!("  run[0][..4] = {:?}", &f.run.row(0)[..4]);
    }

    let (mut fired, mut clips, mut feats) = (0, 0, 0);
    for _ in 0..draws {
        let (_, t) = augment_traced(sample, &cfg, &mut rng);
        fired += t.fired as usize;
        clips += t.run.dropped_clips.len() + t.kick.dropped_clips.len();
        feats += t.run.dropped_features.len() + t.kick.dropped_features.len();
    }
    let fired_f = fired.max(1) as f64;
    println!("\nover {draws} draws:");
    println!("  pipeline applied   {:.4} (configured {})", fired as f64 / draws as f64, cfg.apply_prob);
    println!("  clip drop rate     {:.4} (configured {})", clips as f64 / (fired_f * 12.0), cfg.frame_dropout);
    println!("  feature drop rate  {:.4} (configured {})", feats as f64 / (fired_f * 2.0 * ds.dim as f64), cfg.feature_dropout);
    Ok(())
}
