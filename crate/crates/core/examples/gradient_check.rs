//! Central-difference check of the full model's backward pass.
//!
//! `cargo run --release --example gradient_check -- [seed]`

use mambakick::data::{Direction, Features};
use mambakick::fusion::{loss_backward, weighted_smoothed_ce, LossConfig, LossNormalization};
use mambakick::model::{BranchSet, Exclusion, ModelBundle, ModelConfig};
use mambakick::nn::{Mat, Module};
use mambakick::ssm::{LayerConfig, ScanMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn nudge(m: &mut ModelBundle, index: usize, delta: f64) {
    let mut offset = 0;
    m.visit_params_mut(&mut |p| {
        if (offset..offset + p.len()).contains(&index) {
            p[index - offset] += delta;
        }
        offset += p.len();
    });
}

fn main() -> mambakick::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        input_dim: 6,
        classes: 3,
        encoder_layers: 2,
        layer: LayerConfig { width: 6, expand: 2, state_size: 4, conv_width: 4, gated: true, dt_min: 1e-3, dt_max: 0.1 },
        meta_dim: 4,
        fusion_hidden: 8,
        dropout: 0.3,
        bn_eps: 1e-5,
        bn_momentum: 0.1,
        scan_mode: ScanMode::Parallel,
        branches: BranchSet::ALL,
        exclusion: Exclusion::ZeroInput,
    };
    let mut model = ModelBundle::new(cfg, &mut rng)?;
    let feats: Vec<Features> = (0..4)
        .map(|i| Features {
            run: random_mat(5, 6, &mut rng),
            kick: random_mat(3, 6, &mut rng),
            meta: [(i % 2) as f64, (i / 2) as f64],
            label: Direction::ALL[i % 3],
            gk_direction: None,
        })
        .collect();
    let batch: Vec<&Features> = feats.iter().collect();
    let labels: Vec<usize> = feats.iter().map(|f| f.label as usize).collect();
    let loss_cfg = LossConfig { class_weights: vec![1.2, 2.0, 0.7], label_smoothing: 0.01, normalization: LossNormalization::WeightSum };
    // the same dropout mask on every evaluation
    let loss = |m: &ModelBundle| {
        let (logits, _) = m.forward_train(&batch, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        weighted_smoothed_ce(&logits, &labels, &loss_cfg).unwrap()
    };

    let (logits, cache) = model.forward_train(&batch, &mut ChaCha8Rng::seed_from_u64(99))?;
    let mut grad = model.zeroed();
    model.backward(&cache, &loss_backward(&logits, &labels, &loss_cfg)?, &mut grad)?;

    let mut names = Vec::new();
    grad.visit_params("", &mut |n, p| names.push((n.to_string(), p.len())));
    let analytic = grad.flat_params();
    let mut index = 0;
    println!("{:<40} {:>6} {:>12}", "tensor", "size", "max rel err");
    for (name, len) in names {
        let mut worst = 0.0f64;
        for _ in 0..len {
            nudge(&mut model, index, H);
            let up = loss(&model);
            nudge(&mut model, index, -2.0 * H);
            let down = loss(&model);
            nudge(&mut model, index, H);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[index];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            index += 1;
        }
        println!("{name:<40} {len:>6} {worst:>12.2e}");
    }
    Ok(())
}
