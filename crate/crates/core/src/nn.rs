//! Dense building blocks shared by the encoders and the fusion head.
//!
//! Everything works on row-major `f64` buffers. Each layer exposes a forward
//! pass that records what its backward pass needs, and a backward pass that
//! *accumulates* into a gradient value of the same type as the layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix, used for `T × H` sequences and `B × F` batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot be {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Anything holding learnable tensors.
///
/// Both visitors must walk the tensors in the same order; the optimizer,
/// gradient clipping and the finite-difference checks rely on it.
pub trait Module {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.len());
        n
    }

    /// A copy with every learnable value set to zero, used as a gradient buffer.
    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut g = self.clone();
        g.visit_params_mut(&mut |p| p.fill(0.0));
        g
    }

    /// All learnable values in visiting order.
    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit_params("", &mut |_, p| out.extend_from_slice(p));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = W x (+ b)`, with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Linear {
    /// Uniform `±1/sqrt(in_dim)` initialisation for weight and bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = bias.then(|| (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect());
        Linear { in_dim, out_dim, weight, bias }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: bias.then(|| vec![0.0; out_dim]),
        }
    }

    #[inline]
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (o, yo) in y.iter_mut().enumerate() {
            let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *yo = acc;
        }
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.in_dim {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.in_dim, x.cols
            )));
        }
        let mut y = Mat::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            let (xr, yr) = (x.row(r), &mut y.data[r * self.out_dim..(r + 1) * self.out_dim]);
            self.apply(xr, yr);
        }
        Ok(y)
    }

    /// Accumulates `dW`, `db` into `grad` and `dx` (when given) for one row.
    #[inline]
    pub fn backward_row(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let gw = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (gwi, xi) in gw.iter_mut().zip(x) {
                *gwi += g * xi;
            }
            if let Some(b) = grad.bias.as_mut() {
                b[o] += g;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (dxi, wi) in dx.iter_mut().zip(w) {
                    *dxi += g * wi;
                }
            }
        }
    }

    /// Row-wise backward over a whole matrix; returns `dx`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear) -> Mat {
        let mut dx = Mat::zeros(x.rows, self.in_dim);
        for r in 0..x.rows {
            let dxr = &mut dx.data[r * self.in_dim..(r + 1) * self.in_dim];
            self.backward_row(x.row(r), dy.row(r), grad, Some(dxr));
        }
        dx
    }
}

impl Module for Linear {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Per-row normalisation with a learnable affine map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gamma: vec![1.0; dim], beta: vec![0.0; dim], eps: 1e-5 }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, LayerNormCache) {
        let n = x.cols as f64;
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut y = Mat::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(is);
            for c in 0..x.cols {
                let h = (row[c] - mean) * is;
                xhat.data[r * x.cols + c] = h;
                y.data[r * x.cols + c] = self.gamma[c] * h + self.beta[c];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Mat, grad: &mut LayerNorm) -> Mat {
        let (rows, cols) = (dy.rows, dy.cols);
        let n = cols as f64;
        let mut dx = Mat::zeros(rows, cols);
        let mut dxhat = vec![0.0; cols];
        for r in 0..rows {
            let xh = cache.xhat.row(r);
            let g = dy.row(r);
            let (mut sum, mut dot) = (0.0, 0.0);
            for c in 0..cols {
                grad.gamma[c] += g[c] * xh[c];
                grad.beta[c] += g[c];
                dxhat[c] = g[c] * self.gamma[c];
                sum += dxhat[c];
                dot += dxhat[c] * xh[c];
            }
            let is = cache.inv_std[r];
            let out = dx.row_mut(r);
            for c in 0..cols {
                out[c] = is / n * (n * dxhat[c] - sum - xh[c] * dot);
            }
        }
        dx
    }
}

impl Module for LayerNorm {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Batch normalisation over the feature axis of a `B × F` batch.
///
/// Train mode normalises with the biased batch variance and folds the
/// unbiased estimate into the running variance, so it needs `B ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm1d {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl BatchNorm1d {
    pub fn new(dim: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm1d {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            eps,
            momentum,
        }
    }

    /// Batch-statistics pass. Returns the statistics it would fold into the
    /// running averages so callers decide whether to commit them.
    pub fn forward_train(&self, x: &Mat) -> Result<(Mat, BatchNormCache, BatchStats)> {
        if x.rows < 2 {
            return Err(Error::InvalidInput(format!(
                "batch normalisation in train mode needs at least 2 samples, got {}",
                x.rows
            )));
        }
        let (b, f) = (x.rows as f64, x.cols);
        let mut mean = vec![0.0; f];
        for r in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= b);
        let mut var = vec![0.0; f];
        for r in 0..x.rows {
            for c in 0..f {
                let d = x.row(r)[c] - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= b);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = Mat::zeros(x.rows, f);
        let mut y = Mat::zeros(x.rows, f);
        for r in 0..x.rows {
            for c in 0..f {
                let h = (x.row(r)[c] - mean[c]) * inv_std[c];
                xhat.data[r * f + c] = h;
                y.data[r * f + c] = self.gamma[c] * h + self.beta[c];
            }
        }
        let unbiased = var.iter().map(|v| v * b / (b - 1.0)).collect();
        Ok((y, BatchNormCache { xhat, inv_std }, BatchStats { mean, var: unbiased }))
    }

    pub fn commit(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * stats.var[c];
        }
    }

    pub fn apply_eval(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..x.len() {
            let h = (x[c] - self.running_mean[c]) / (self.running_var[c] + self.eps).sqrt();
            y[c] = self.gamma[c] * h + self.beta[c];
        }
    }

    pub fn backward(&self, cache: &BatchNormCache, dy: &Mat, grad: &mut BatchNorm1d) -> Mat {
        let (rows, f) = (dy.rows, dy.cols);
        let b = rows as f64;
        let mut sum = vec![0.0; f];
        let mut dot = vec![0.0; f];
        for r in 0..rows {
            for c in 0..f {
                let g = dy.row(r)[c];
                let h = cache.xhat.row(r)[c];
                grad.gamma[c] += g * h;
                grad.beta[c] += g;
                let dh = g * self.gamma[c];
                sum[c] += dh;
                dot[c] += dh * h;
            }
        }
        let mut dx = Mat::zeros(rows, f);
        for r in 0..rows {
            for c in 0..f {
                let dh = dy.row(r)[c] * self.gamma[c];
                let h = cache.xhat.row(r)[c];
                dx.data[r * f + c] = cache.inv_std[c] / b * (b * dh - sum[c] - h * dot[c]);
            }
        }
        dx
    }
}

/// Per-feature batch mean and unbiased variance.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Module for BatchNorm1d {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow; its derivative is [`sigmoid`].
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Numerically stable softmax into `out`.
pub fn softmax(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_roundtrip_and_extremes() {
        for &y in &[1e-3, 0.05, 0.1, 1.0, 7.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert!(softplus(800.0).is_finite());
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn linear_matches_naive_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lin = Linear::new(5, 3, true, &mut rng);
        let x = Mat::from_vec(2, 5, (0..10).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let y = lin.forward(&x).unwrap();
        for r in 0..2 {
            for o in 0..3 {
                let mut want = lin.bias.as_ref().unwrap()[o];
                for i in 0..5 {
                    want += lin.weight[o * 5 + i] * x.at(r, i);
                }
                assert!((y.at(r, o) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn batchnorm_rejects_single_sample_in_train_mode() {
        let bn = BatchNorm1d::new(4, 1e-5, 0.1);
        let x = Mat::zeros(1, 4);
        assert!(matches!(bn.forward_train(&x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn batchnorm_constant_batch_yields_beta() {
        let mut bn = BatchNorm1d::new(3, 1e-5, 0.1);
        bn.beta = vec![0.5, -1.0, 2.0];
        let x = Mat::from_vec(3, 3, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let (y, _, stats) = bn.forward_train(&x).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[0.5, -1.0, 2.0]);
        }
        assert_eq!(stats.var, vec![0.0; 3]);
    }

    #[test]
    fn layernorm_output_is_standardised() {
        let ln = LayerNorm::new(4);
        let x = Mat::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = ln.forward(&x);
        let mean: f64 = y.data.iter().sum::<f64>() / 4.0;
        let var: f64 = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }
}
