//! Evaluation of the discretised recurrence
//! `h_t = a_bar_t ⊙ h_{t−1} + b_bar_t · x_t`, `y_t = ⟨c_t, h_t⟩ + d ⊙ x_t`.
//!
//! Two evaluators produce the same states: a left-to-right loop and a
//! work-efficient (Blelloch) scan over the affine maps `h ↦ a·h + u`.

use crate::error::{Error, Result};
use crate::nn::Mat;

/// Input-dependent discrete parameters for a whole sequence.
///
/// `a_bar` and `b_bar` are laid out `[t][channel][state]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteParams {
    pub len: usize,
    pub channels: usize,
    pub state_size: usize,
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

impl DiscreteParams {
    /// Same `a_bar`/`b_bar` at every `(t, channel, state)`.
    pub fn constant(len: usize, channels: usize, state_size: usize, a_bar: f64, b_bar: f64) -> Self {
        let n = len * channels * state_size;
        DiscreteParams { len, channels, state_size, a_bar: vec![a_bar; n], b_bar: vec![b_bar; n] }
    }

    fn check(&self, x: &Mat, c: &Mat, skip_d: &[f64]) -> Result<()> {
        if self.len == 0 {
            return Err(Error::InvalidInput("empty sequence".into()));
        }
        let n = self.len * self.channels * self.state_size;
        if self.a_bar.len() != n || self.b_bar.len() != n {
            return Err(Error::Shape("discrete parameter buffers do not match len×channels×state".into()));
        }
        if x.rows != self.len || x.cols != self.channels {
            return Err(Error::Shape(format!(
                "input is {}×{}, expected {}×{}",
                x.rows, x.cols, self.len, self.channels
            )));
        }
        if c.rows != self.len || c.cols != self.state_size {
            return Err(Error::Shape(format!(
                "output projection is {}×{}, expected {}×{}",
                c.rows, c.cols, self.len, self.state_size
            )));
        }
        if skip_d.len() != self.channels {
            return Err(Error::Shape("skip vector length differs from channel count".into()));
        }
        Ok(())
    }
}

/// The affine map `h ↦ a·h + u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub u: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { a: 1.0, u: 0.0 };

    /// `self ∘ earlier`: apply `earlier` first, then `self`.
    #[inline]
    pub fn after(self, earlier: Affine) -> Affine {
        Affine { a: self.a * earlier.a, u: self.a * earlier.u + self.u }
    }

    #[inline]
    pub fn apply(self, h: f64) -> f64 {
        self.a * h + self.u
    }
}

/// In-place inclusive scan with an associative (not necessarily commutative)
/// `combine(earlier, later)`, using the up-sweep/down-sweep tree.
///
/// Slices of length ≤ 1 are left untouched.
pub fn inclusive_scan<T: Copy>(items: &mut [T], identity: T, combine: impl Fn(T, T) -> T) {
    let n = items.len();
    if n <= 1 {
        return;
    }
    let size = n.next_power_of_two();
    let mut tree = Vec::with_capacity(size);
    tree.extend_from_slice(items);
    tree.resize(size, identity);

    let mut stride = 1;
    while stride < size {
        let mut i = 2 * stride - 1;
        while i < size {
            tree[i] = combine(tree[i - stride], tree[i]);
            i += 2 * stride;
        }
        stride *= 2;
    }

    tree[size - 1] = identity;
    stride = size / 2;
    while stride >= 1 {
        let mut i = 2 * stride - 1;
        while i < size {
            let left = tree[i - stride];
            tree[i - stride] = tree[i];
            tree[i] = combine(tree[i], left);
            i += 2 * stride;
        }
        stride /= 2;
    }

    // tree now holds the exclusive prefix; fold each element back in
    for (item, prefix) in items.iter_mut().zip(tree) {
        *item = combine(prefix, *item);
    }
}

/// Hidden states from the sequential recurrence, laid out like `a_bar`.
pub fn states_recurrent(dp: &DiscreteParams, x: &Mat) -> Vec<f64> {
    let (e, n) = (dp.channels, dp.state_size);
    let mut h = vec![0.0; dp.len * e * n];
    let mut prev = vec![0.0; e * n];
    for t in 0..dp.len {
        let base = t * e * n;
        for ch in 0..e {
            let xv = x.at(t, ch);
            for s in 0..n {
                let i = ch * n + s;
                prev[i] = dp.a_bar[base + i] * prev[i] + dp.b_bar[base + i] * xv;
            }
        }
        h[base..base + e * n].copy_from_slice(&prev);
    }
    h
}

/// Hidden states from the associative scan, laid out like `a_bar`.
pub fn states_parallel(dp: &DiscreteParams, x: &Mat) -> Vec<f64> {
    let (t_len, e, n) = (dp.len, dp.channels, dp.state_size);
    let mut h = vec![0.0; t_len * e * n];
    let mut lane = Vec::with_capacity(t_len);
    for ch in 0..e {
        for s in 0..n {
            lane.clear();
            lane.extend((0..t_len).map(|t| {
                let i = (t * e + ch) * n + s;
                Affine { a: dp.a_bar[i], u: dp.b_bar[i] * x.at(t, ch) }
            }));
            inclusive_scan(&mut lane, Affine::IDENTITY, |earlier, later| later.after(earlier));
            for (t, map) in lane.iter().enumerate() {
                h[(t * e + ch) * n + s] = map.apply(0.0);
            }
        }
    }
    h
}

/// `y_t = ⟨c_t, h_t⟩ + d ⊙ x_t` for every channel.
pub fn readout(states: &[f64], c: &Mat, skip_d: &[f64], x: &Mat) -> Mat {
    let (t_len, e) = (x.rows, x.cols);
    let n = c.cols;
    let mut y = Mat::zeros(t_len, e);
    for t in 0..t_len {
        let ct = c.row(t);
        for ch in 0..e {
            let hs = &states[(t * e + ch) * n..(t * e + ch + 1) * n];
            let dot: f64 = hs.iter().zip(ct).map(|(h, c)| h * c).sum();
            y.data[t * e + ch] = dot + skip_d[ch] * x.at(t, ch);
        }
    }
    y
}

/// Full recurrence, evaluated strictly left to right.
pub fn recurrence_recurrent(dp: &DiscreteParams, c: &Mat, skip_d: &[f64], x: &Mat) -> Result<Mat> {
    dp.check(x, c, skip_d)?;
    Ok(readout(&states_recurrent(dp, x), c, skip_d, x))
}

/// Full recurrence, evaluated with the associative scan.
pub fn recurrence_parallel(dp: &DiscreteParams, c: &Mat, skip_d: &[f64], x: &Mat) -> Result<Mat> {
    dp.check(x, c, skip_d)?;
    Ok(readout(&states_parallel(dp, x), c, skip_d, x))
}
