//! Planted-signal synthetic penalties.
//!
//! Each label owns a unit direction in the plane. The kick sequence carries
//! a linear ramp along that direction in features 0–1, the run sequence a
//! weaker ramp in features 2–3, and features 4–5 a label-independent
//! per-sample drift. Everything else is isotropic Gaussian noise.
//!
//! Metadata is drawn from label-conditional rates chosen so that, under the
//! published label prior, the direction percentages per metadata category
//! reproduce the published distribution table. When the signal strength is
//! zero, metadata is drawn independently of the label so the whole sample is
//! uninformative.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::sample::{Dataset, Direction, EmbeddingSequence, LabelSpace, Metadata, PenaltySample, Phase, Side};
use crate::error::{Error, Result};

/// Direction percentages (left, center, right) per pitch side: right, left.
pub const PITCH_SIDE_ROWS: [[f64; 3]; 2] = [[46.65, 17.78, 35.57], [48.29, 14.53, 37.18]];
/// Direction percentages (left, center, right) per kicker foot: right, left.
pub const FOOT_ROWS: [[f64; 3]; 2] = [[51.23, 16.26, 32.51], [33.09, 17.65, 49.26]];
/// Kicks taken from the right / left side of the pitch.
pub const PITCH_SIDE_COUNTS: [usize; 2] = [388, 234];
/// Right-footed / left-footed kickers.
pub const FOOT_COUNTS: [usize; 2] = [486, 136];
/// Left / center / right shots in the full three-class set.
pub const CLASS_COUNTS: [usize; 3] = [294, 103, 225];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPrior {
    /// 294 / 103 / 225 as in the published dataset.
    Published,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_samples: usize,
    pub dim: usize,
    pub run_len: usize,
    pub kick_len: usize,
    pub signal_strength: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Run ramp amplitude relative to the kick ramp.
    pub run_signal_ratio: f64,
    pub label_prior: LabelPrior,
    /// Probability that the goalkeeper dives the way the ball goes; `None` omits the field.
    pub gk_match_rate: Option<f64>,
    /// Share of samples whose metadata bits are a fixed code of the label
    /// instead of a draw from the conditional tables. 0 keeps the tables.
    pub metadata_signal: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_samples: 622,
            dim: 16,
            run_len: 5,
            kick_len: 3,
            signal_strength: 1.0,
            noise_std: 0.1,
            seed: 0,
            run_signal_ratio: 0.5,
            label_prior: LabelPrior::Published,
            gk_match_rate: Some(0.46),
            metadata_signal: 0.0,
        }
    }
}

fn direction_vector(d: Direction) -> [f64; 2] {
    let angle = 2.0 * std::f64::consts::PI * d as usize as f64 / 3.0;
    [angle.cos(), angle.sin()]
}

/// `P(label)` implied by a two-row conditional table and its row counts.
fn implied_prior(rows: &[[f64; 3]; 2], counts: &[usize; 2]) -> [f64; 3] {
    let total = (counts[0] + counts[1]) as f64;
    let mut p = [0.0; 3];
    for (row, &n) in rows.iter().zip(counts) {
        for k in 0..3 {
            p[k] += row[k] / 100.0 * n as f64 / total;
        }
    }
    let s: f64 = p.iter().sum();
    p.map(|v| v / s)
}

/// `P(attribute = left | label)` by Bayes on a conditional table.
fn left_given_label(rows: &[[f64; 3]; 2], counts: &[usize; 2]) -> [f64; 3] {
    let total = (counts[0] + counts[1]) as f64;
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let right = rows[0][k] * counts[0] as f64 / total;
        let left = rows[1][k] * counts[1] as f64 / total;
        *o = left / (left + right);
    }
    out
}

/// `(pitch side, foot)` code used for label-determined metadata.
fn metadata_code(d: Direction) -> (Side, Side) {
    match d {
        Direction::Left => (Side::Left, Side::Right),
        Direction::Center => (Side::Right, Side::Left),
        Direction::Right => (Side::Right, Side::Right),
    }
}

fn marginal_left(counts: &[usize; 2]) -> f64 {
    counts[1] as f64 / (counts[0] + counts[1]) as f64
}

/// Generates a three-class dataset; deterministic in `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.dim < 6 {
        return Err(Error::Config(format!("synthetic data needs at least 6 features, got {}", cfg.dim)));
    }
    if cfg.run_len == 0 || cfg.kick_len == 0 {
        return Err(Error::Config("phase lengths must be positive".into()));
    }
    let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
    if !finite_nonneg(cfg.signal_strength) || !finite_nonneg(cfg.noise_std) || !finite_nonneg(cfg.run_signal_ratio) {
        return Err(Error::Config("signal, noise and run ratio must be finite and non-negative".into()));
    }
    if let Some(r) = cfg.gk_match_rate {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Config(format!("goalkeeper match rate {r} outside [0, 1]")));
        }
    }
    if !(0.0..=1.0).contains(&cfg.metadata_signal) {
        return Err(Error::Config(format!("metadata signal {} outside [0, 1]", cfg.metadata_signal)));
    }
    let prior = match cfg.label_prior {
        LabelPrior::Published => implied_prior(&FOOT_ROWS, &FOOT_COUNTS),
        LabelPrior::Uniform => [1.0 / 3.0; 3],
    };
    let label_dist = WeightedIndex::new(prior).expect("prior weights are positive");
    let coupled = cfg.signal_strength > 0.0;
    let foot_left = left_given_label(&FOOT_ROWS, &FOOT_COUNTS);
    let side_left = left_given_label(&PITCH_SIDE_ROWS, &PITCH_SIDE_COUNTS);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ds = Dataset::new(LabelSpace::ThreeClass, cfg.dim, cfg.run_len, cfg.kick_len, "synthetic");
    for i in 0..cfg.num_samples {
        let label = Direction::ALL[label_dist.sample(&mut rng)];
        let (p_foot, p_side) = if coupled {
            (foot_left[label as usize], side_left[label as usize])
        } else {
            (marginal_left(&FOOT_COUNTS), marginal_left(&PITCH_SIDE_COUNTS))
        };
        let mut foot = if rng.random_bool(p_foot) { Side::Left } else { Side::Right };
        let mut pitch_side = if rng.random_bool(p_side) { Side::Left } else { Side::Right };
        if coupled && cfg.metadata_signal > 0.0 && rng.random_bool(cfg.metadata_signal) {
            (pitch_side, foot) = metadata_code(label);
        }
        let dir = direction_vector(label);
        let drift = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];

        let phase_seq = |phase: Phase, len: usize, offset: usize, amp: f64, rng: &mut ChaCha8Rng| {
            let mut data = Vec::with_capacity(len * cfg.dim);
            for t in 0..len {
                let ramp = (t + 1) as f64 / len as f64;
                for d in 0..cfg.dim {
                    let mut v = if cfg.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
                    if d == offset || d == offset + 1 {
                        v += amp * dir[d - offset] * ramp;
                    }
                    if d == 4 || d == 5 {
                        v += cfg.signal_strength * drift[d - 4] * ramp;
                    }
                    data.push(v as f32);
                }
            }
            EmbeddingSequence::new(phase, len, cfg.dim, data)
        };
        let run = phase_seq(Phase::Run, cfg.run_len, 2, cfg.signal_strength * cfg.run_signal_ratio, &mut rng)?;
        let kick = phase_seq(Phase::Kick, cfg.kick_len, 0, cfg.signal_strength, &mut rng)?;

        let gk_direction = cfg.gk_match_rate.map(|rate| {
            if rng.random_bool(rate) {
                label
            } else {
                let others: Vec<Direction> = Direction::ALL.into_iter().filter(|&d| d != label).collect();
                others[rng.random_range(0..2)]
            }
        });
        ds.samples.push(PenaltySample {
            id: format!("syn-{i:06}"),
            run,
            kick,
            meta: Metadata { pitch_side, foot },
            label,
            gk_direction,
        });
    }
    Ok(ds)
}
