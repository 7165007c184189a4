use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Module;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-2 }
    }
}

/// First and second moments per learnable value, plus the step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        OptimizerState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One decoupled-weight-decay Adam update on flat slices.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, lr: f64, hp: &AdamW) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::Shape(format!(
            "AdamW step over {} parameters with {} gradients and {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - hp.beta1.powi(state.t as i32);
    let c2 = 1.0 - hp.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * (m_hat / (v_hat.sqrt() + hp.eps) + hp.weight_decay * params[i]);
    }
    Ok(())
}

/// [`adamw_step`] over every learnable tensor of a module.
pub fn adamw_step_module<M: Module>(model: &mut M, grad: &M, state: &mut OptimizerState, lr: f64, hp: &AdamW) -> Result<()> {
    let mut flat = model.flat_params();
    adamw_step(&mut flat, &grad.flat_params(), state, lr, hp)?;
    let mut offset = 0;
    model.visit_params_mut(&mut |p| {
        p.copy_from_slice(&flat[offset..offset + p.len()]);
        offset += p.len();
    });
    Ok(())
}

/// Global L2 norm of all gradient values.
pub fn global_norm<M: Module>(grad: &M) -> f64 {
    let mut sq = 0.0;
    grad.visit_params("", &mut |_, p| sq += p.iter().map(|g| g * g).sum::<f64>());
    sq.sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`.
///
/// Returns the norm before clipping; `step` only labels the divergence error.
pub fn clip_gradients(grads: &mut [f64], max_norm: f64, step: usize) -> Result<f64> {
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step, reason: "non-finite gradient".into() });
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    Ok(norm)
}

/// [`clip_gradients`] over a module-shaped gradient buffer.
pub fn clip_module<M: Module>(grad: &mut M, max_norm: f64, step: usize) -> Result<f64> {
    let mut finite = true;
    grad.visit_params("", &mut |_, p| finite &= p.iter().all(|g| g.is_finite()));
    if !finite {
        return Err(Error::Divergence { step, reason: "non-finite gradient".into() });
    }
    let norm = global_norm(grad);
    if norm > max_norm {
        let s = max_norm / norm;
        grad.visit_params_mut(&mut |p| p.iter_mut().for_each(|g| *g *= s));
    }
    Ok(norm)
}

/// Linear warmup from 0 to `lr_max`, then half-cosine decay to 0 at `total_steps`.
pub fn cosine_warmup_lr(step: usize, warmup_steps: usize, total_steps: usize, lr_max: f64) -> Result<f64> {
    if warmup_steps >= total_steps {
        return Err(Error::Config(format!("warmup of {warmup_steps} steps does not fit in {total_steps} total steps")));
    }
    if step > total_steps {
        return Err(Error::InvalidInput(format!("step {step} beyond the schedule of {total_steps} steps")));
    }
    if step < warmup_steps {
        return Ok(lr_max * step as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(lr_max * 0.5 * (1.0 + (PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_decay() -> AdamW {
        AdamW { weight_decay: 0.0, ..Default::default() }
    }

    #[test]
    fn clip_cases() {
        let mut g = vec![0.3, 0.4];
        assert_eq!(clip_gradients(&mut g, 1.0, 0).unwrap(), 0.5);
        assert_eq!(g, vec![0.3, 0.4]);
        let mut g = vec![3.0, 4.0];
        clip_gradients(&mut g, 1.0, 0).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.0; 3];
        assert_eq!(clip_gradients(&mut g, 1.0, 0).unwrap(), 0.0);
        assert_eq!(g, vec![0.0; 3]);
        let mut g = vec![1.0, f64::NAN];
        assert!(matches!(clip_gradients(&mut g, 1.0, 17), Err(Error::Divergence { step: 17, .. })));
    }

    #[test]
    fn adamw_zero_gradient_fixpoint() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[0.0], &mut s, 0.1, &no_decay()).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn adamw_first_step() {
        let mut p = vec![0.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, 0.1, &no_decay()).unwrap();
        // bias correction gives m̂ = 1, v̂ = 1
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn adamw_pure_decay() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[0.0], &mut s, 0.001, &AdamW::default()).unwrap();
        assert!((p[0] - 0.99995).abs() < 1e-15);
    }

    #[test]
    fn adamw_shape_mismatch() {
        let mut s = OptimizerState::new(2);
        assert!(adamw_step(&mut [0.0, 0.0], &[1.0], &mut s, 0.1, &no_decay()).is_err());
    }

    #[test]
    fn schedule_landmarks() {
        assert_eq!(cosine_warmup_lr(0, 10, 110, 1e-3).unwrap(), 0.0);
        assert_eq!(cosine_warmup_lr(10, 10, 110, 1e-3).unwrap(), 1e-3);
        assert!((cosine_warmup_lr(60, 10, 110, 1e-3).unwrap() - 5e-4).abs() < 1e-18);
        assert!(cosine_warmup_lr(110, 10, 110, 1e-3).unwrap().abs() < 1e-18);
        assert!(cosine_warmup_lr(111, 10, 110, 1e-3).is_err());
        assert!(cosine_warmup_lr(0, 10, 10, 1e-3).is_err());
    }

    proptest! {
        #[test]
        fn clipped_norm_bounded(g in prop::collection::vec(-1e3f64..1e3, 1..50), max in 1e-3f64..10.0) {
            let mut g = g;
            clip_gradients(&mut g, max, 0).unwrap();
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n <= max * (1.0 + 1e-12));
        }

        #[test]
        fn schedule_bounded(step in 0usize..=1000, warm in 0usize..100) {
            let lr = cosine_warmup_lr(step, warm, 1000, 1e-3).unwrap();
            prop_assert!((0.0..=1e-3).contains(&lr));
        }
    }
}
