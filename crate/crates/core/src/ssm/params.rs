use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scan::{readout, states_parallel, states_recurrent, DiscreteParams};
use super::zoh::{zoh, zoh_grad};
use crate::error::{Error, Result};
use crate::nn::{join, sigmoid, softplus, softplus_inv, Linear, Mat, Module};

/// How the recurrence is evaluated in the forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    #[default]
    Recurrent,
    Parallel,
}

/// Parameters of one selective state-space core over `channels` inputs.
///
/// The evolution matrix is diagonal per channel and stored as log-magnitudes:
/// `A = −exp(a_log)`, so every effective entry is strictly negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub channels: usize,
    pub state_size: usize,
    /// `channels × state_size`
    pub a_log: Vec<f64>,
    pub skip_d: Vec<f64>,
    /// Pre-activation step size; its bias is the step bias.
    pub delta_proj: Linear,
    pub b_proj: Linear,
    pub c_proj: Linear,
}

/// Output of [`SsmParams::selective_project`] for one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SsmCache {
    x: Mat,
    delta_pre: Mat,
    delta: Mat,
    b: Mat,
    c: Mat,
    discrete: DiscreteParams,
    states: Vec<f64>,
}

impl SsmCache {
    pub fn discrete(&self) -> &DiscreteParams {
        &self.discrete
    }

    pub fn delta(&self) -> &Mat {
        &self.delta
    }
}

impl SsmParams {
    /// `a_log = ln(n)` for state index `n = 1..N`; step bias drawn so the
    /// initial step sits log-uniformly in `[dt_min, dt_max]`.
    pub fn new<R: Rng + ?Sized>(
        channels: usize,
        state_size: usize,
        dt_min: f64,
        dt_max: f64,
        rng: &mut R,
    ) -> Self {
        assert!(channels >= 1 && state_size >= 1);
        let a_log = (0..channels)
            .flat_map(|_| (1..=state_size).map(|n| (n as f64).ln()))
            .collect();
        let mut delta_proj = Linear::new(channels, channels, true, rng);
        let (lo, hi) = (dt_min.ln(), dt_max.ln());
        delta_proj.bias = Some(
            (0..channels)
                .map(|_| softplus_inv(rng.random_range(lo..=hi).exp()))
                .collect(),
        );
        SsmParams {
            channels,
            state_size,
            a_log,
            skip_d: vec![1.0; channels],
            delta_proj,
            b_proj: Linear::new(channels, state_size, true, rng),
            c_proj: Linear::new(channels, state_size, true, rng),
        }
    }

    /// Effective (negative) evolution entries.
    pub fn evolution(&self) -> Vec<f64> {
        self.a_log.iter().map(|l| -l.exp()).collect()
    }

    /// Input-dependent `B_t`, `C_t` and positive step `Δ_t` for one input row.
    pub fn selective_project(&self, x_t: &[f64]) -> Result<Projection> {
        if x_t.len() != self.channels {
            return Err(Error::Shape(format!(
                "selective projection expects {} channels, got {}",
                self.channels,
                x_t.len()
            )));
        }
        let mut b = vec![0.0; self.state_size];
        let mut c = vec![0.0; self.state_size];
        let mut delta = vec![0.0; self.channels];
        self.b_proj.apply(x_t, &mut b);
        self.c_proj.apply(x_t, &mut c);
        self.delta_proj.apply(x_t, &mut delta);
        delta.iter_mut().for_each(|d| *d = softplus(*d));
        Ok(Projection { b, c, delta })
    }

    fn check_input(&self, x: &Mat) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::InvalidInput("empty sequence".into()));
        }
        if x.cols != self.channels {
            return Err(Error::Shape(format!(
                "state-space core expects {} channels, got {}",
                self.channels, x.cols
            )));
        }
        if !x.is_finite() {
            return Err(Error::NumericDomain("non-finite input to state-space core".into()));
        }
        Ok(())
    }

    /// Runs the recurrence left to right; `h_0 = 0`.
    pub fn scan_recurrent(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward(x, ScanMode::Recurrent)?.0)
    }

    /// Same map as [`Self::scan_recurrent`], evaluated by associative scan.
    pub fn scan_parallel(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward(x, ScanMode::Parallel)?.0)
    }

    pub fn forward(&self, x: &Mat, mode: ScanMode) -> Result<(Mat, SsmCache)> {
        self.check_input(x)?;
        let (t_len, e, n) = (x.rows, self.channels, self.state_size);
        let mut delta_pre = Mat::zeros(t_len, e);
        let mut b = Mat::zeros(t_len, n);
        let mut c = Mat::zeros(t_len, n);
        for t in 0..t_len {
            let xt = x.row(t);
            self.delta_proj.apply(xt, delta_pre.row_mut(t));
            self.b_proj.apply(xt, b.row_mut(t));
            self.c_proj.apply(xt, c.row_mut(t));
        }
        let delta = Mat {
            rows: t_len,
            cols: e,
            data: delta_pre.data.iter().map(|&p| softplus(p)).collect(),
        };
        let evo = self.evolution();
        let mut discrete = DiscreteParams::constant(t_len, e, n, 0.0, 0.0);
        for t in 0..t_len {
            for ch in 0..e {
                let dt = delta.at(t, ch);
                for s in 0..n {
                    let i = (t * e + ch) * n + s;
                    let (ab, bb) = zoh(evo[ch * n + s], b.at(t, s), dt);
                    discrete.a_bar[i] = ab;
                    discrete.b_bar[i] = bb;
                }
            }
        }
        let states = match mode {
            ScanMode::Recurrent => states_recurrent(&discrete, x),
            ScanMode::Parallel => states_parallel(&discrete, x),
        };
        let y = readout(&states, &c, &self.skip_d, x);
        let cache = SsmCache { x: x.clone(), delta_pre, delta, b, c, discrete, states };
        Ok((y, cache))
    }

    /// Reverse-mode pass; accumulates into `grad` and returns `dx`.
    pub fn backward(&self, cache: &SsmCache, dy: &Mat, grad: &mut SsmParams) -> Result<Mat> {
        let x = &cache.x;
        if dy.rows != x.rows || dy.cols != x.cols {
            return Err(Error::Shape(format!(
                "upstream gradient is {}×{}, forward output was {}×{}",
                dy.rows, dy.cols, x.rows, x.cols
            )));
        }
        let (t_len, e, n) = (x.rows, self.channels, self.state_size);
        let evo = self.evolution();
        let dp = &cache.discrete;
        let mut dx = Mat::zeros(t_len, e);
        let mut d_b = Mat::zeros(t_len, n);
        let mut d_c = Mat::zeros(t_len, n);
        let mut d_delta = Mat::zeros(t_len, e);
        let mut d_evo = vec![0.0; e * n];
        // gradient reaching h_t through h_{t+1}
        let mut carry = vec![0.0; e * n];

        for t in (0..t_len).rev() {
            for ch in 0..e {
                let g_out = dy.at(t, ch);
                let xv = x.at(t, ch);
                let dt = cache.delta.at(t, ch);
                grad.skip_d[ch] += g_out * xv;
                let mut dxv = g_out * self.skip_d[ch];
                let mut ddt = 0.0;
                for s in 0..n {
                    let i = (t * e + ch) * n + s;
                    let h = cache.states[i];
                    d_c.data[t * n + s] += g_out * h;
                    let dh = g_out * cache.c.at(t, s) + carry[ch * n + s];
                    let h_prev = if t > 0 { cache.states[i - e * n] } else { 0.0 };
                    let d_abar = dh * h_prev;
                    let d_bbar = dh * xv;
                    dxv += dh * dp.b_bar[i];
                    let g = zoh_grad(evo[ch * n + s], cache.b.at(t, s), dt);
                    d_evo[ch * n + s] += d_abar * g.abar_a + d_bbar * g.bbar_a;
                    ddt += d_abar * g.abar_delta + d_bbar * g.bbar_delta;
                    d_b.data[t * n + s] += d_bbar * g.bbar_b;
                    carry[ch * n + s] = dh * dp.a_bar[i];
                }
                dx.data[t * e + ch] += dxv;
                d_delta.data[t * e + ch] = ddt;
            }
        }

        for (i, g) in d_evo.iter().enumerate() {
            grad.a_log[i] += g * evo[i];
        }
        let mut d_pre = vec![0.0; e];
        for t in 0..t_len {
            let xt = x.row(t);
            for ch in 0..e {
                d_pre[ch] = d_delta.at(t, ch) * sigmoid(cache.delta_pre.at(t, ch));
            }
            let dxt = &mut dx.data[t * e..(t + 1) * e];
            self.delta_proj.backward_row(xt, &d_pre, &mut grad.delta_proj, Some(&mut *dxt));
            self.b_proj.backward_row(xt, d_b.row(t), &mut grad.b_proj, Some(&mut *dxt));
            self.c_proj.backward_row(xt, d_c.row(t), &mut grad.c_proj, Some(dxt));
        }
        Ok(dx)
    }
}

impl Module for SsmParams {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "a_log"), &self.a_log);
        f(&join(prefix, "skip_d"), &self.skip_d);
        self.delta_proj.visit_params(&join(prefix, "delta_proj"), f);
        self.b_proj.visit_params(&join(prefix, "b_proj"), f);
        self.c_proj.visit_params(&join(prefix, "c_proj"), f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.a_log);
        f(&mut self.skip_d);
        self.delta_proj.visit_params_mut(f);
        self.b_proj.visit_params_mut(f);
        self.c_proj.visit_params_mut(f);
    }
}
