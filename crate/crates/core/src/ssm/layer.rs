//! The gated selective state-space block.
//!
//! ```text
//! u = W_in x                      (width → inner, no bias)
//! v = silu(causal_conv(u))        (or v = u when the short convolution is off)
//! s = ssm(v)                      (selective recurrence over inner channels)
//! o = sigmoid(W_g x + b_g) ⊙ s    (or o = s when ungated)
//! y = W_out o                     (inner → width, no bias)
//! ```
//!
//! Every stage is bias-free on the main path, so a zero input sequence
//! always produces a zero output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ScanMode, SsmCache, SsmParams};
use crate::error::{Error, Result};
use crate::nn::{join, sigmoid, silu, silu_grad, Linear, Mat, Module};

/// Shape and switches of one block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub width: usize,
    pub expand: usize,
    pub state_size: usize,
    /// Depthwise causal convolution width; 0 disables the convolution stage.
    pub conv_width: usize,
    pub gated: bool,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl LayerConfig {
    pub fn inner(&self) -> usize {
        self.width * self.expand
    }
}

/// Per-channel causal convolution, weights stored `channels × width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthwiseConv {
    pub channels: usize,
    pub width: usize,
    pub weight: Vec<f64>,
}

impl DepthwiseConv {
    pub fn new<R: Rng + ?Sized>(channels: usize, width: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (width as f64).sqrt();
        DepthwiseConv {
            channels,
            width,
            weight: (0..channels * width).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn forward(&self, u: &Mat) -> Mat {
        let k = self.width;
        let mut out = Mat::zeros(u.rows, u.cols);
        for t in 0..u.rows {
            for ch in 0..u.cols {
                let w = &self.weight[ch * k..(ch + 1) * k];
                let mut acc = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    // tap j looks back (k − 1 − j) steps
                    if let Some(src) = (t + j + 1).checked_sub(k) {
                        acc += wj * u.at(src, ch);
                    }
                }
                out.data[t * u.cols + ch] = acc;
            }
        }
        out
    }

    pub fn backward(&self, u: &Mat, dout: &Mat, grad: &mut DepthwiseConv) -> Mat {
        let k = self.width;
        let mut du = Mat::zeros(u.rows, u.cols);
        for t in 0..u.rows {
            for ch in 0..u.cols {
                let g = dout.at(t, ch);
                for j in 0..k {
                    if let Some(src) = (t + j + 1).checked_sub(k) {
                        grad.weight[ch * k + j] += g * u.at(src, ch);
                        du.data[src * u.cols + ch] += g * self.weight[ch * k + j];
                    }
                }
            }
        }
        du
    }
}

impl Module for DepthwiseConv {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "weight"), &self.weight);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weight);
    }
}

/// One gated selective state-space block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectiveSsmLayer {
    pub width: usize,
    pub inner: usize,
    pub in_proj: Linear,
    pub gate_proj: Option<Linear>,
    pub conv: Option<DepthwiseConv>,
    pub ssm: SsmParams,
    pub out_proj: Linear,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    x: Mat,
    u: Mat,
    gate: Option<Mat>,
    conv_out: Option<Mat>,
    ssm: SsmCache,
    s: Mat,
    o: Mat,
}

impl LayerCache {
    pub fn ssm(&self) -> &SsmCache {
        &self.ssm
    }

    /// Raw recurrence output before gating.
    pub fn scan_output(&self) -> &Mat {
        &self.s
    }
}

impl SelectiveSsmLayer {
    pub fn new<R: Rng + ?Sized>(cfg: &LayerConfig, rng: &mut R) -> Self {
        let inner = cfg.inner();
        SelectiveSsmLayer {
            width: cfg.width,
            inner,
            in_proj: Linear::new(cfg.width, inner, false, rng),
            gate_proj: cfg.gated.then(|| Linear::new(cfg.width, inner, true, rng)),
            conv: (cfg.conv_width > 0).then(|| DepthwiseConv::new(inner, cfg.conv_width, rng)),
            ssm: SsmParams::new(inner, cfg.state_size, cfg.dt_min, cfg.dt_max, rng),
            out_proj: Linear::new(inner, cfg.width, false, rng),
        }
    }

    pub fn forward(&self, x: &Mat, mode: ScanMode) -> Result<(Mat, LayerCache)> {
        if x.cols != self.width {
            return Err(Error::Shape(format!(
                "block expects width {}, got {}",
                self.width, x.cols
            )));
        }
        if !x.is_finite() {
            return Err(Error::NumericDomain("non-finite block input".into()));
        }
        let u = self.in_proj.forward(x)?;
        let (conv_out, v) = match &self.conv {
            Some(conv) => {
                let c = conv.forward(&u);
                let v = Mat { rows: c.rows, cols: c.cols, data: c.data.iter().map(|&z| silu(z)).collect() };
                (Some(c), v)
            }
            None => (None, u.clone()),
        };
        let (s, ssm) = self.ssm.forward(&v, mode)?;
        let gate = match &self.gate_proj {
            Some(gp) => {
                let mut z = gp.forward(x)?;
                z.data.iter_mut().for_each(|v| *v = sigmoid(*v));
                Some(z)
            }
            None => None,
        };
        let o = match &gate {
            Some(g) => Mat {
                rows: s.rows,
                cols: s.cols,
                data: s.data.iter().zip(&g.data).map(|(a, b)| a * b).collect(),
            },
            None => s.clone(),
        };
        let y = self.out_proj.forward(&o)?;
        Ok((y, LayerCache { x: x.clone(), u, gate, conv_out, ssm, s, o }))
    }

    pub fn backward(&self, cache: &LayerCache, dy: &Mat, grad: &mut SelectiveSsmLayer) -> Result<Mat> {
        if dy.rows != cache.x.rows || dy.cols != self.width {
            return Err(Error::Shape(format!(
                "upstream gradient is {}×{}, block output was {}×{}",
                dy.rows, dy.cols, cache.x.rows, self.width
            )));
        }
        let d_o = self.out_proj.backward(&cache.o, dy, &mut grad.out_proj);
        let mut dx = Mat::zeros(cache.x.rows, self.width);
        let d_s = match (&cache.gate, &self.gate_proj) {
            (Some(g), Some(gp)) => {
                let mut dz = Mat::zeros(g.rows, g.cols);
                let mut ds = Mat::zeros(g.rows, g.cols);
                for i in 0..g.data.len() {
                    let gv = g.data[i];
                    ds.data[i] = d_o.data[i] * gv;
                    dz.data[i] = d_o.data[i] * cache.s.data[i] * gv * (1.0 - gv);
                }
                let gp_grad = grad.gate_proj.as_mut().expect("gradient buffer mirrors the layer");
                let dx_gate = gp.backward(&cache.x, &dz, gp_grad);
                dx.data.iter_mut().zip(&dx_gate.data).for_each(|(a, b)| *a += b);
                ds
            }
            _ => d_o,
        };
        let d_v = self.ssm.backward(&cache.ssm, &d_s, &mut grad.ssm)?;
        let d_u = match (&self.conv, &cache.conv_out) {
            (Some(conv), Some(c)) => {
                let dc = Mat {
                    rows: c.rows,
                    cols: c.cols,
                    data: d_v.data.iter().zip(&c.data).map(|(g, z)| g * silu_grad(*z)).collect(),
                };
                let conv_grad = grad.conv.as_mut().expect("gradient buffer mirrors the layer");
                conv.backward(&cache.u, &dc, conv_grad)
            }
            _ => d_v,
        };
        let dx_main = self.in_proj.backward(&cache.x, &d_u, &mut grad.in_proj);
        dx.data.iter_mut().zip(&dx_main.data).for_each(|(a, b)| *a += b);
        Ok(dx)
    }
}

impl Module for SelectiveSsmLayer {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.in_proj.visit_params(&join(prefix, "in_proj"), f);
        if let Some(g) = &self.gate_proj {
            g.visit_params(&join(prefix, "gate_proj"), f);
        }
        if let Some(c) = &self.conv {
            c.visit_params(&join(prefix, "conv"), f);
        }
        self.ssm.visit_params(&join(prefix, "ssm"), f);
        self.out_proj.visit_params(&join(prefix, "out_proj"), f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.in_proj.visit_params_mut(f);
        if let Some(g) = &mut self.gate_proj {
            g.visit_params_mut(f);
        }
        if let Some(c) = &mut self.conv {
            c.visit_params_mut(f);
        }
        self.ssm.visit_params_mut(f);
        self.out_proj.visit_params_mut(f);
    }
}
