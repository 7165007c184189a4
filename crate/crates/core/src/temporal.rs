//! Per-phase temporal encoder: input projection, a stack of pre-norm
//! residual selective state-space blocks, then attention pooling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Phase;
use crate::error::{Error, Result};
use crate::nn::{join, softmax, LayerNorm, LayerNormCache, Linear, Mat, Module};
use crate::ssm::{LayerCache, LayerConfig, ScanMode, SelectiveSsmLayer};

/// Learned scoring vector for softmax-weighted temporal pooling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionPool {
    pub weight: Vec<f64>,
}

/// Pools `h` (T × D') into one vector with `α = softmax(h w)`.
///
/// Returns the pooled vector and the weights `α`.
pub fn attn_pool(h: &Mat, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if h.rows == 0 {
        return Err(Error::InvalidInput("cannot pool an empty sequence".into()));
    }
    if h.cols != w.len() {
        return Err(Error::Shape(format!(
            "pooling weight has {} entries for width {}",
            w.len(),
            h.cols
        )));
    }
    let scores: Vec<f64> = (0..h.rows)
        .map(|t| h.row(t).iter().zip(w).map(|(a, b)| a * b).sum())
        .collect();
    let mut alpha = vec![0.0; h.rows];
    softmax(&scores, &mut alpha);
    let mut pooled = vec![0.0; h.cols];
    for (t, &a) in alpha.iter().enumerate() {
        for (p, v) in pooled.iter_mut().zip(h.row(t)) {
            *p += a * v;
        }
    }
    Ok((pooled, alpha))
}

/// Backward of [`attn_pool`]: accumulates into `dw`, returns `dh`.
pub fn attn_pool_backward(h: &Mat, w: &[f64], alpha: &[f64], d_pooled: &[f64], dw: &mut [f64]) -> Mat {
    let mut dh = Mat::zeros(h.rows, h.cols);
    // dα_t = ⟨d_pooled, h_t⟩; softmax Jacobian: de_t = α_t (dα_t − Σ_s α_s dα_s)
    let d_alpha: Vec<f64> = (0..h.rows)
        .map(|t| h.row(t).iter().zip(d_pooled).map(|(a, b)| a * b).sum())
        .collect();
    let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    for t in 0..h.rows {
        let de = alpha[t] * (d_alpha[t] - mean);
        let row = dh.row_mut(t);
        for c in 0..h.cols {
            row[c] = alpha[t] * d_pooled[c] + de * w[c];
            dw[c] += de * h.at(t, c);
        }
    }
    dh
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub layer: LayerConfig,
}

/// Encoder for one phase (run-up or kick).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchEncoder {
    pub phase: Phase,
    pub input_proj: Linear,
    pub norms: Vec<LayerNorm>,
    pub layers: Vec<SelectiveSsmLayer>,
    pub pool: AttentionPool,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    input: Mat,
    norm_caches: Vec<LayerNormCache>,
    layer_caches: Vec<LayerCache>,
    top: Mat,
    alpha: Vec<f64>,
}

impl EncoderCache {
    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }
}

impl BranchEncoder {
    pub fn new<R: Rng + ?Sized>(phase: Phase, cfg: &EncoderConfig, rng: &mut R) -> Self {
        assert!(cfg.layers >= 1, "an encoder needs at least one block");
        let h = cfg.layer.width;
        let bound = 1.0 / (h as f64).sqrt();
        BranchEncoder {
            phase,
            input_proj: Linear::new(cfg.input_dim, h, true, rng),
            norms: (0..cfg.layers).map(|_| LayerNorm::new(h)).collect(),
            layers: (0..cfg.layers).map(|_| SelectiveSsmLayer::new(&cfg.layer, rng)).collect(),
            pool: AttentionPool { weight: (0..h).map(|_| rng.random_range(-bound..bound)).collect() },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_proj.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.input_proj.out_dim
    }

    /// Encodes a `T × D` sequence into one `D'`-vector.
    pub fn encode(&self, seq: &Mat, mode: ScanMode) -> Result<(Vec<f64>, EncoderCache)> {
        if seq.cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "{:?} encoder expects embedding dimension {}, got {}",
                self.phase,
                self.input_dim(),
                seq.cols
            )));
        }
        if seq.rows == 0 {
            return Err(Error::InvalidInput(format!("empty {:?} sequence", self.phase)));
        }
        let mut x = self.input_proj.forward(seq)?;
        let mut norm_caches = Vec::with_capacity(self.layers.len());
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for (norm, layer) in self.norms.iter().zip(&self.layers) {
            let (n, nc) = norm.forward(&x);
            let (y, lc) = layer.forward(&n, mode)?;
            x.data.iter_mut().zip(&y.data).for_each(|(a, b)| *a += b);
            norm_caches.push(nc);
            layer_caches.push(lc);
        }
        let (pooled, alpha) = attn_pool(&x, &self.pool.weight)?;
        Ok((pooled, EncoderCache { input: seq.clone(), norm_caches, layer_caches, top: x, alpha }))
    }

    /// Accumulates parameter gradients into `grad`; returns the sequence gradient.
    pub fn backward(&self, cache: &EncoderCache, d_out: &[f64], grad: &mut BranchEncoder) -> Result<Mat> {
        if d_out.len() != self.output_dim() {
            return Err(Error::Shape("pooled gradient length differs from encoder width".into()));
        }
        let mut dx = attn_pool_backward(&cache.top, &self.pool.weight, &cache.alpha, d_out, &mut grad.pool.weight);
        for l in (0..self.layers.len()).rev() {
            let d_n = self.layers[l].backward(&cache.layer_caches[l], &dx, &mut grad.layers[l])?;
            let d_res = self.norms[l].backward(&cache.norm_caches[l], &d_n, &mut grad.norms[l]);
            dx.data.iter_mut().zip(&d_res.data).for_each(|(a, b)| *a += b);
        }
        Ok(self.input_proj.backward(&cache.input, &dx, &mut grad.input_proj))
    }
}

impl Module for BranchEncoder {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.input_proj.visit_params(&join(prefix, "input_proj"), f);
        for (i, (n, l)) in self.norms.iter().zip(&self.layers).enumerate() {
            n.visit_params(&join(prefix, &format!("norm{i}")), f);
            l.visit_params(&join(prefix, &format!("layer{i}")), f);
        }
        f(&join(prefix, "pool.weight"), &self.pool.weight);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.input_proj.visit_params_mut(f);
        for (n, l) in self.norms.iter_mut().zip(self.layers.iter_mut()) {
            n.visit_params_mut(f);
            l.visit_params_mut(f);
        }
        f(&mut self.pool.weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{finite_diff_check, random_mat, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn enc_cfg() -> EncoderConfig {
        EncoderConfig {
            input_dim: 5,
            layers: 2,
            layer: LayerConfig { width: 4, expand: 2, state_size: 3, conv_width: 4, gated: true, dt_min: 1e-2, dt_max: 0.5 },
        }
    }

    #[test]
    fn zero_weight_pool_is_mean() {
        let h = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap();
        let (pooled, alpha) = attn_pool(&h, &[0.0, 0.0]).unwrap();
        assert!(alpha.iter().all(|a| (a - 1.0 / 3.0).abs() < 1e-15));
        assert!((pooled[0] - 3.0).abs() < 1e-14 && (pooled[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn singleton_pool() {
        let h = Mat::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let (pooled, alpha) = attn_pool(&h, &[3.0, 1.0, -2.0]).unwrap();
        assert_eq!(alpha, vec![1.0]);
        assert_eq!(pooled, h.data);
    }

    #[test]
    fn two_score_closed_form() {
        // scores [0, ln 3] through w = e_1
        let h = Mat::from_vec(2, 2, vec![0.0, 1.0, 3f64.ln(), -2.0]).unwrap();
        let (pooled, alpha) = attn_pool(&h, &[1.0, 0.0]).unwrap();
        assert!((alpha[0] - 0.25).abs() < 1e-15 && (alpha[1] - 0.75).abs() < 1e-15);
        assert!((pooled[1] - (0.25 * 1.0 + 0.75 * -2.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(attn_pool(&Mat::zeros(0, 2), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn pool_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_mat(6, 3, &mut rng);
        let w = vec![0.3, -0.7, 1.1];
        let (p0, a0) = attn_pool(&h, &w).unwrap();
        // adding c·w/|w|² to every row shifts every score by c
        let c = 4.2;
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        let mut shifted = h.clone();
        for t in 0..6 {
            for k in 0..3 {
                shifted.row_mut(t)[k] += c * w[k] / norm2;
            }
        }
        let (_, a1) = attn_pool(&shifted, &w).unwrap();
        for (x, y) in a0.iter().zip(&a1) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a0.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(a0.iter().all(|&a| a > 0.0 && a < 1.0));
        assert_eq!(p0.len(), 3);
    }

    #[test]
    fn constant_sequence_reduces_to_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut enc = BranchEncoder::new(Phase::Run, &enc_cfg(), &mut rng);
        for l in &mut enc.layers {
            l.out_proj.weight.fill(0.0);
            let gp = l.gate_proj.as_mut().unwrap();
            gp.bias.as_mut().unwrap().fill(60.0);
        }
        let clip: Vec<f64> = (0..5).map(|i| 0.1 * i as f64 - 0.2).collect();
        let seq = Mat::from_vec(4, 5, clip.iter().cycle().take(20).cloned().collect()).unwrap();
        let (out, _) = enc.encode(&seq, ScanMode::Recurrent).unwrap();
        let mut want = vec![0.0; 4];
        enc.input_proj.apply(&clip, &mut want);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn last_clip_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = BranchEncoder::new(Phase::Kick, &enc_cfg(), &mut rng);
        let seq = random_mat(3, 5, &mut rng);
        let mut other = seq.clone();
        other.row_mut(2)[0] += 0.3;
        let (a, _) = enc.encode(&seq, ScanMode::Recurrent).unwrap();
        let (b, _) = enc.encode(&other, ScanMode::Recurrent).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = BranchEncoder::new(Phase::Run, &enc_cfg(), &mut rng);
        let seq = random_mat(5, 5, &mut rng);
        let (_, cache) = enc.encode(&seq, ScanMode::Recurrent).unwrap();
        let mut g = enc.zeroed();
        let d = enc.backward(&cache, &[0.0; 4], &mut g).unwrap();
        assert!(d.data.iter().all(|&v| v == 0.0));
        assert!(g.flat_params().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singleton_sequence_bypasses_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = BranchEncoder::new(Phase::Kick, &enc_cfg(), &mut rng);
        let seq = random_mat(1, 5, &mut rng);
        let (_, cache) = enc.encode(&seq, ScanMode::Recurrent).unwrap();
        let mut g = enc.zeroed();
        enc.backward(&cache, &[1.0, -0.5, 0.2, 0.3], &mut g).unwrap();
        // with one timestep α ≡ 1, so the scoring vector receives nothing
        assert!(g.pool.weight.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut enc = BranchEncoder::new(Phase::Run, &enc_cfg(), &mut rng);
        let seq = random_mat(5, 5, &mut rng);
        let w = [0.4, -1.0, 0.7, 0.2];
        let loss = |e: &BranchEncoder| -> f64 {
            let (o, _) = e.encode(&seq, ScanMode::Recurrent).unwrap();
            o.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = enc.encode(&seq, ScanMode::Recurrent).unwrap();
        let mut g = enc.zeroed();
        let dseq = enc.backward(&cache, &w, &mut g).unwrap();
        finite_diff_check(&mut enc, &g, loss, 1e-4);
        for i in 0..seq.data.len() {
            let (mut up, mut down) = (seq.clone(), seq.clone());
            up.data[i] += 1e-5;
            down.data[i] -= 1e-5;
            let f = |s: &Mat| enc.encode(s, ScanMode::Recurrent).unwrap().0.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let fd = (f(&up) - f(&down)) / 2e-5;
            assert!(rel_err(dseq.data[i], fd) < 1e-4);
        }
    }
}
