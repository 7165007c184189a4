//! Test-only helpers: random fixtures and the central-difference oracle.

use rand::Rng;

use crate::nn::{Mat, Module};

pub fn random_mat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Adds `delta` to the `index`-th learnable value (visiting order).
pub fn nudge<M: Module>(m: &mut M, index: usize, delta: f64) {
    let mut offset = 0;
    m.visit_params_mut(&mut |p| {
        if index >= offset && index < offset + p.len() {
            p[index - offset] += delta;
        }
        offset += p.len();
    });
}

/// Relative error with a floor so that vanishing gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares every analytic gradient entry against central differences with
/// step 1e-5 and panics on the first entry above `tol`.
pub fn finite_diff_check<M, F>(model: &mut M, grad: &M, loss: F, tol: f64)
where
    M: Module,
    F: Fn(&M) -> f64,
{
    let h = 1e-5;
    let analytic = grad.flat_params();
    let mut names = Vec::new();
    grad.visit_params("", &mut |n, p| names.extend((0..p.len()).map(|i| format!("{n}[{i}]"))));
    for (i, &a) in analytic.iter().enumerate() {
        nudge(model, i, h);
        let up = loss(model);
        nudge(model, i, -2.0 * h);
        let down = loss(model);
        nudge(model, i, h);
        let fd = (up - down) / (2.0 * h);
        let err = rel_err(a, fd);
        assert!(err <= tol, "{}: analytic {a:.10e} vs numeric {fd:.10e} (rel {err:.2e})", names[i]);
    }
}
