use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::{adamw_step_module, clip_module, cosine_warmup_lr, global_norm, AdamW, OptimizerState};
use crate::augment::augment;
use crate::data::{compute_class_weights, Dataset, Features, PenaltySample};
use crate::error::{Error, Result};
use crate::fusion::{loss_backward, weighted_smoothed_ce, LossConfig};
use crate::metrics::{class_labels, predict_all};
use crate::model::{BranchSet, Exclusion, ModelBundle};
use crate::nn::{Mat, Module};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate of the epoch's last update.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0-based global update index.
    pub step: usize,
    pub lr: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

impl History {
    pub fn stopped_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }

    /// One line per epoch, tab separated.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\tval_accuracy\tlr\n");
        for e in &self.epochs {
            s.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.lr));
        }
        s
    }
}

/// Best-so-far tracking on validation accuracy; ties keep the earlier epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopState {
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub since_improvement: usize,
    pub patience: usize,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        EarlyStopState { best: None, best_epoch: 0, since_improvement: 0, patience }
    }

    /// Records an epoch's score; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.since_improvement = 0;
            true
        } else {
            self.since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }
}

/// Model options that are not hyperparameters: which branches to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchOptions {
    pub branches: BranchSet,
    pub exclusion: Exclusion,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions { branches: BranchSet::ALL, exclusion: Exclusion::ZeroInput }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: ModelBundle,
    pub optimizer: OptimizerState,
    pub history: History,
}

fn eval_loss(model: &ModelBundle, samples: &[PenaltySample], labels: &[usize], loss: &LossConfig) -> Result<f64> {
    let mut logits = Mat::zeros(samples.len(), model.classes());
    for (i, s) in samples.iter().enumerate() {
        logits.row_mut(i).copy_from_slice(&model.logits(&Features::from(s))?);
    }
    weighted_smoothed_ce(&logits, labels, loss)
}

/// Trains one model on `train`, monitoring `val`, and returns the best
/// snapshot.
///
/// All randomness (initialisation, shuffling, augmentation, dropout) comes
/// from one stream seeded with `seed`.
pub fn train_model(train: &Dataset, val: &Dataset, cfg: &TrainConfig, opts: BranchOptions, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.label_space != val.label_space || train.dim != val.dim {
        return Err(Error::InvalidInput("training and validation sets differ in label space or dimension".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    let classes = train.label_space.classes();
    let train_labels = class_labels(&train.samples, train.label_space)?;
    let val_labels = class_labels(&val.samples, val.label_space)?;
    let batches = cfg.batches_per_epoch(train.len());
    if batches == 0 {
        return Err(Error::InvalidInput(format!(
            "training set of {} samples holds no full batch of {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let class_weights = if cfg.class_weighting {
        compute_class_weights(&train_labels, classes)?
    } else {
        vec![1.0; classes]
    };
    let loss_cfg = LossConfig { class_weights, label_smoothing: cfg.label_smoothing, normalization: cfg.loss_normalization };
    let hp = AdamW { beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps, weight_decay: cfg.weight_decay };
    let (warmup, total) = cfg.schedule(train.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelBundle::new(cfg.model_config(train.dim, classes, opts.branches, opts.exclusion), &mut rng)?;
    let mut state = OptimizerState::new(model.num_params());
    let mut history = History { warmup_steps: warmup, total_steps: total, ..Default::default() };
    let mut stop = EarlyStopState::new(cfg.patience);
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for b in 0..batches {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let feats: Vec<Features> = idx.iter().map(|&i| augment(&train.samples[i], &cfg.augment, &mut rng)).collect();
            let refs: Vec<&Features> = feats.iter().collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();

            let (logits, cache) = model.forward_train(&refs, &mut rng).map_err(|e| diverged(e, step))?;
            if !logits.is_finite() {
                return Err(Error::Divergence { step, reason: "non-finite logits".into() });
            }
            let loss = weighted_smoothed_ce(&logits, &labels, &loss_cfg)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, reason: format!("loss became {loss}") });
            }
            let d_logits = loss_backward(&logits, &labels, &loss_cfg)?;
            let mut grad = model.zeroed();
            model.backward(&cache, &d_logits, &mut grad).map_err(|e| diverged(e, step))?;
            let grad_norm = clip_module(&mut grad, cfg.clip_norm, step)?;
            let clipped_norm = global_norm(&grad);
            lr = cosine_warmup_lr(step, warmup, total, cfg.lr)?;
            adamw_step_module(&mut model, &grad, &mut state, lr, &hp)?;
            model.head.bn.commit(&cache.bn_stats);
            if model.flat_params().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step, reason: "non-finite parameters after update".into() });
            }
            history.steps.push(StepRecord { step, lr, grad_norm, clipped_norm });
            loss_sum += loss;
            step += 1;
        }

        let preds = predict_all(&model, &val.samples).map_err(|e| diverged(e, step))?;
        let correct = preds.iter().zip(&val_labels).filter(|(p, t)| p == t).count();
        let val_accuracy = correct as f64 / val.len() as f64;
        let val_loss = eval_loss(&model, &val.samples, &val_labels, &loss_cfg).map_err(|e| diverged(e, step))?;
        history.epochs.push(EpochRecord { epoch, train_loss: loss_sum / batches as f64, val_loss, val_accuracy, lr });
        if stop.observe(epoch, val_accuracy) {
            best = model.clone();
        }
        if stop.should_stop() {
            break;
        }
    }
    history.best_epoch = stop.best_epoch;
    history.best_val_accuracy = stop.best.unwrap_or(0.0);
    Ok(TrainedModel { model: best, optimizer: state, history })
}

// Inputs were validated up front, so a numeric failure mid-training means the weights blew up.
fn diverged(e: Error, step: usize) -> Error {
    match e {
        Error::NumericDomain(reason) => Error::Divergence { step, reason },
        e => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::AugmentConfig;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            state_size: 2,
            layers: 1,
            hidden: 4,
            meta_dim: 2,
            fusion_hidden: 8,
            ..Default::default()
        }
    }

    fn split() -> (Dataset, Dataset) {
        let ds = generate_synthetic(&SyntheticConfig { num_samples: 40, dim: 6, ..Default::default() }).unwrap();
        let idx: Vec<usize> = (0..40).collect();
        (ds.subset(&idx[..30]), ds.subset(&idx[30..]))
    }

    #[test]
    fn early_stop_ties_keep_earlier_epoch() {
        let mut s = EarlyStopState::new(2);
        assert!(s.observe(1, 0.5));
        assert!(!s.observe(2, 0.5));
        assert!(!s.should_stop());
        assert!(!s.observe(3, 0.4));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn deterministic_history() {
        let (tr, va) = split();
        let a = train_model(&tr, &va, &tiny_cfg(), BranchOptions::default(), 5).unwrap();
        let b = train_model(&tr, &va, &tiny_cfg(), BranchOptions::default(), 5).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.steps.len(), 3 * 6);
    }

    #[test]
    fn trace_follows_schedule_and_clip() {
        let (tr, va) = split();
        let cfg = TrainConfig { clip_norm: 0.05, ..tiny_cfg() };
        let out = train_model(&tr, &va, &cfg, BranchOptions::default(), 1).unwrap();
        let h = &out.history;
        assert_eq!((h.warmup_steps, h.total_steps), (0, 18));
        for s in &h.steps {
            assert_eq!(s.lr, cosine_warmup_lr(s.step, h.warmup_steps, h.total_steps, cfg.lr).unwrap());
            assert!(s.clipped_norm <= 0.05 + 1e-9);
        }
    }

    #[test]
    fn zero_lr_only_moves_running_statistics() {
        let (tr, va) = split();
        let cfg = TrainConfig { lr: 0.0, augment: AugmentConfig::null(), ..tiny_cfg() };
        let out = train_model(&tr, &va, &cfg, BranchOptions::default(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fresh = ModelBundle::new(out.model.config.clone(), &mut rng).unwrap();
        assert_eq!(fresh.flat_params(), out.model.flat_params());
    }

    #[test]
    fn too_small_training_set() {
        let (tr, va) = split();
        let cfg = TrainConfig { batch_size: 31, ..tiny_cfg() };
        assert!(train_model(&tr, &va, &cfg, BranchOptions::default(), 0).is_err());
    }
}

