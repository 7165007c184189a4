//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use mambakick::data::{Dataset, Direction, EmbeddingSequence, LabelSpace, Metadata, PenaltySample, Phase, Side};
use mambakick::nn::Module;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor so vanishing gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn nudge<M: Module>(m: &mut M, index: usize, delta: f64) {
    let mut offset = 0;
    m.visit_params_mut(&mut |p| {
        if index >= offset && index < offset + p.len() {
            p[index - offset] += delta;
        }
        offset += p.len();
    });
}

/// Worst entry of a gradient check.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Compares every entry of `analytic` with `(L(θ+h) − L(θ−h)) / 2h`.
pub fn finite_difference<M, F>(model: &mut M, analytic: &M, loss: F) -> FdReport
where
    M: Module,
    F: Fn(&M) -> f64,
{
    let grads = analytic.flat_params();
    let mut names = Vec::new();
    analytic.visit_params("", &mut |n, p| names.extend((0..p.len()).map(|i| format!("{n}[{i}]"))));
    let mut report = FdReport { checked: 0, max_rel_err: 0.0, worst: String::new() };
    for (i, &a) in grads.iter().enumerate() {
        nudge(model, i, FD_STEP);
        let up = loss(model);
        nudge(model, i, -2.0 * FD_STEP);
        let down = loss(model);
        nudge(model, i, FD_STEP);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = rel_err(a, numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = format!("{} analytic {a:.6e} numeric {numeric:.6e}", names[i]);
        }
        report.checked += 1;
    }
    report
}

/// Dataset with the given left/center/right counts and trivial features.
pub fn dataset_with_counts(counts: [usize; 3]) -> Dataset {
    let mut ds = Dataset::new(LabelSpace::ThreeClass, 2, 2, 1, "fixture");
    for (d, &n) in Direction::ALL.iter().zip(&counts) {
        for i in 0..n {
            ds.samples.push(PenaltySample {
                id: format!("{}-{i:04}", d.name()),
                run: EmbeddingSequence::new(Phase::Run, 2, 2, vec![0.0; 4]).unwrap(),
                kick: EmbeddingSequence::new(Phase::Kick, 1, 2, vec![0.0; 2]).unwrap(),
                meta: Metadata { pitch_side: Side::Right, foot: Side::Right },
                label: *d,
                gk_direction: None,
            });
        }
    }
    ds
}
