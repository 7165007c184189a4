//! Metadata branch, fusion classifier and the training objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, BatchNorm1d, BatchNormCache, BatchStats, Linear, Mat, Module};

/// `relu(W γ + b)` over the two relaxed metadata bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaBranch {
    pub proj: Linear,
}

impl MetaBranch {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        MetaBranch { proj: Linear::new(2, dim, true, rng) }
    }

    pub fn output_dim(&self) -> usize {
        self.proj.out_dim
    }

    /// Batch forward; returns the embedding (also the backward cache, as relu
    /// can be undone from its output).
    pub fn forward(&self, gamma: &Mat) -> Result<Mat> {
        let mut y = self.proj.forward(gamma)?;
        y.data.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(y)
    }

    pub fn backward(&self, gamma: &Mat, out: &Mat, d_out: &Mat, grad: &mut MetaBranch) {
        let mut dz = d_out.clone();
        for (d, &o) in dz.data.iter_mut().zip(&out.data) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
        self.proj.backward(gamma, &dz, &mut grad.proj);
    }
}

impl Module for MetaBranch {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.proj.visit_params(&join(prefix, "proj"), f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.proj.visit_params_mut(f);
    }
}

/// `Linear → BatchNorm → ReLU → Dropout → Linear` over the concatenated
/// branch vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionHead {
    pub hidden: Linear,
    pub bn: BatchNorm1d,
    pub dropout: f64,
    pub out: Linear,
}

#[derive(Clone, Debug)]
pub struct FusionCache {
    z: Mat,
    bn: BatchNormCache,
    /// ReLU output before dropout.
    act: Mat,
    mask: Vec<f64>,
    dropped: Mat,
}

impl FusionHead {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        bn_eps: f64,
        bn_momentum: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout rate {dropout} outside [0, 1)")));
        }
        if !(2..=3).contains(&classes) {
            return Err(Error::Config(format!("class count must be 2 or 3, got {classes}")));
        }
        Ok(FusionHead {
            hidden: Linear::new(input_dim, hidden, true, rng),
            bn: BatchNorm1d::new(hidden, bn_eps, bn_momentum),
            dropout,
            out: Linear::new(hidden, classes, true, rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn classes(&self) -> usize {
        self.out.out_dim
    }

    /// Batch-statistics pass with inverted dropout. The running statistics
    /// are returned, not committed.
    pub fn forward_train<R: Rng + ?Sized>(&self, z: &Mat, rng: &mut R) -> Result<(Mat, FusionCache, BatchStats)> {
        let pre = self.hidden.forward(z)?;
        let (normed, bn, stats) = self.bn.forward_train(&pre)?;
        let mut act = normed;
        act.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let keep = 1.0 - self.dropout;
        let mask: Vec<f64> = (0..act.data.len())
            .map(|_| {
                if self.dropout == 0.0 || rng.random::<f64>() >= self.dropout {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut dropped = act.clone();
        dropped.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        let logits = self.out.forward(&dropped)?;
        Ok((logits, FusionCache { z: z.clone(), bn, act, mask, dropped }, stats))
    }

    /// Deterministic inference: running statistics, no dropout.
    pub fn forward_eval(&self, z: &Mat) -> Result<Mat> {
        let pre = self.hidden.forward(z)?;
        let mut h = vec![0.0; pre.cols];
        let mut logits = Mat::zeros(z.rows, self.classes());
        for r in 0..z.rows {
            self.bn.apply_eval(pre.row(r), &mut h);
            h.iter_mut().for_each(|v| *v = v.max(0.0));
            self.out.apply(&h, logits.row_mut(r));
        }
        Ok(logits)
    }

    /// Returns the gradient with respect to the fused input `z`.
    pub fn backward(&self, cache: &FusionCache, d_logits: &Mat, grad: &mut FusionHead) -> Result<Mat> {
        if d_logits.rows != cache.z.rows || d_logits.cols != self.classes() {
            return Err(Error::Shape(format!(
                "logit gradient is {}×{}, expected {}×{}",
                d_logits.rows,
                d_logits.cols,
                cache.z.rows,
                self.classes()
            )));
        }
        let mut d = self.out.backward(&cache.dropped, d_logits, &mut grad.out);
        for ((g, m), a) in d.data.iter_mut().zip(&cache.mask).zip(&cache.act.data) {
            *g *= m;
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        let d_pre = self.bn.backward(&cache.bn, &d, &mut grad.bn);
        Ok(self.hidden.backward(&cache.z, &d_pre, &mut grad.hidden))
    }
}

impl Module for FusionHead {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.hidden.visit_params(&join(prefix, "hidden"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
        self.out.visit_params(&join(prefix, "out"), f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.hidden.visit_params_mut(f);
        self.bn.visit_params_mut(f);
        self.out.visit_params_mut(f);
    }
}

/// How the weighted per-sample losses are averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Divide by the sum of the applied class weights.
    #[default]
    WeightSum,
    /// Divide by the batch size.
    BatchMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub class_weights: Vec<f64>,
    pub label_smoothing: f64,
    pub normalization: LossNormalization,
}

impl LossConfig {
    pub fn unweighted(classes: usize, label_smoothing: f64) -> Self {
        LossConfig { class_weights: vec![1.0; classes], label_smoothing, normalization: LossNormalization::WeightSum }
    }

    fn check(&self, logits: &Mat, labels: &[usize]) -> Result<()> {
        let n = self.class_weights.len();
        if logits.cols != n {
            return Err(Error::Shape(format!("{} logits per sample for {n} class weights", logits.cols)));
        }
        if logits.rows != labels.len() || labels.is_empty() {
            return Err(Error::Shape(format!("{} logit rows for {} labels", logits.rows, labels.len())));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!("label smoothing {} outside [0, 1)", self.label_smoothing)));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Config("class weights must be positive".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::LabelOutOfRange { label: l, classes: n });
        }
        if !logits.is_finite() {
            return Err(Error::NumericDomain("non-finite logits".into()));
        }
        Ok(())
    }

    fn target(&self, label: usize, k: usize) -> f64 {
        let s = self.label_smoothing;
        let hit = if k == label { 1.0 } else { 0.0 };
        (1.0 - s) * hit + s / self.class_weights.len() as f64
    }

    fn norm(&self, labels: &[usize]) -> f64 {
        match self.normalization {
            LossNormalization::WeightSum => labels.iter().map(|&l| self.class_weights[l]).sum(),
            LossNormalization::BatchMean => labels.len() as f64,
        }
    }
}

/// Numerically stable `log softmax` of one row.
pub fn log_softmax(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(z) {
        *o = v - max - lse;
    }
}

/// Class probabilities per row.
pub fn probabilities(logits: &Mat) -> Mat {
    let mut p = Mat::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        crate::nn::softmax(logits.row(r), p.row_mut(r));
    }
    p
}

/// Mean negative log-likelihood of the true class, with no weighting or smoothing.
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> Result<f64> {
    LossConfig::unweighted(logits.cols, 0.0).check(logits, labels)?;
    let mut lp = vec![0.0; logits.cols];
    let mut sum = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        log_softmax(logits.row(r), &mut lp);
        sum += lp[y];
    }
    Ok(-(sum / labels.len() as f64))
}

/// Class-weighted, label-smoothed cross-entropy.
pub fn weighted_smoothed_ce(logits: &Mat, labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    cfg.check(logits, labels)?;
    let mut lp = vec![0.0; logits.cols];
    let mut sum = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        log_softmax(logits.row(r), &mut lp);
        let inner: f64 = lp.iter().enumerate().map(|(k, l)| cfg.target(y, k) * l).sum();
        sum += cfg.class_weights[y] * inner;
    }
    Ok(-(sum / cfg.norm(labels)))
}

/// Gradient of [`weighted_smoothed_ce`] with respect to the logits.
pub fn loss_backward(logits: &Mat, labels: &[usize], cfg: &LossConfig) -> Result<Mat> {
    cfg.check(logits, labels)?;
    let norm = cfg.norm(labels);
    let mut d = probabilities(logits);
    for (r, &y) in labels.iter().enumerate() {
        let w = cfg.class_weights[y] / norm;
        for (k, g) in d.row_mut(r).iter_mut().enumerate() {
            *g = w * (*g - cfg.target(y, k));
        }
    }
    Ok(d)
}
