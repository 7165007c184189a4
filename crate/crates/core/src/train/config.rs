use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::fusion::LossNormalization;
use crate::model::{BranchSet, Exclusion, ModelConfig};
use crate::ssm::{LayerConfig, ScanMode};

/// Every training and architecture knob.
///
/// Stored as TOML: plain `key = value` lines at the top level and the
/// augmentation settings in an `[augment]` table. Missing keys take the
/// defaults below; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub folds: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub label_smoothing: f64,
    /// Warmup length as a fraction of the total step budget.
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub loss_normalization: LossNormalization,
    /// Inverse-frequency class weights from the training fold; unit weights when off.
    pub class_weighting: bool,
    pub state_size: usize,
    pub layers: usize,
    /// Encoder width; 0 picks `min(D, 128)`.
    pub hidden: usize,
    pub expand: usize,
    /// Short causal convolution width; 0 disables it.
    pub conv_width: usize,
    pub gated: bool,
    pub dt_min: f64,
    pub dt_max: f64,
    pub meta_dim: usize,
    pub fusion_hidden: usize,
    pub dropout: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub scan_mode: ScanMode,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            folds: 10,
            batch_size: 5,
            max_epochs: 60,
            patience: 10,
            lr: 1e-3,
            weight_decay: 5e-2,
            clip_norm: 1.0,
            label_smoothing: 0.01,
            warmup_frac: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            loss_normalization: LossNormalization::WeightSum,
            class_weighting: true,
            state_size: 16,
            layers: 2,
            hidden: 0,
            expand: 2,
            conv_width: 4,
            gated: true,
            dt_min: 1e-3,
            dt_max: 0.1,
            meta_dim: 16,
            fusion_hidden: 128,
            dropout: 0.3,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            scan_mode: ScanMode::Recurrent,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr = {} must be a non-negative number", self.lr));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size = {} must be at least 2 for batch normalisation", self.batch_size));
        }
        if self.patience < 1 || self.max_epochs < 1 {
            return bad("patience and max_epochs must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("folds = {} must be at least 2", self.folds));
        }
        if !(self.weight_decay >= 0.0 && self.clip_norm > 0.0) {
            return bad("weight_decay must be non-negative and clip_norm positive".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing = {} outside [0, 1)", self.label_smoothing));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return bad(format!("warmup_frac = {} outside [0, 1)", self.warmup_frac));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return bad("Adam moments must lie in [0, 1) and eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        if self.state_size == 0 || self.layers == 0 || self.expand == 0 || self.meta_dim == 0 || self.fusion_hidden == 0 {
            return bad("state_size, layers, expand, meta_dim and fusion_hidden must be positive".into());
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return bad(format!("need 0 < dt_min <= dt_max, got {} and {}", self.dt_min, self.dt_max));
        }
        if !(self.bn_eps > 0.0 && (0.0..=1.0).contains(&self.bn_momentum)) {
            return bad("bn_eps must be positive and bn_momentum in [0, 1]".into());
        }
        self.augment.validate()
    }

    pub fn encoder_width(&self, input_dim: usize) -> usize {
        if self.hidden == 0 {
            input_dim.min(128)
        } else {
            self.hidden
        }
    }

    pub fn model_config(&self, input_dim: usize, classes: usize, branches: BranchSet, exclusion: Exclusion) -> ModelConfig {
        ModelConfig {
            input_dim,
            classes,
            encoder_layers: self.layers,
            layer: LayerConfig {
                width: self.encoder_width(input_dim),
                expand: self.expand,
                state_size: self.state_size,
                conv_width: self.conv_width,
                gated: self.gated,
                dt_min: self.dt_min,
                dt_max: self.dt_max,
            },
            meta_dim: self.meta_dim,
            fusion_hidden: self.fusion_hidden,
            dropout: self.dropout,
            bn_eps: self.bn_eps,
            bn_momentum: self.bn_momentum,
            scan_mode: self.scan_mode,
            branches,
            exclusion,
        }
    }

    /// Full-batch updates per epoch; the trailing partial batch is dropped.
    pub fn batches_per_epoch(&self, train_len: usize) -> usize {
        train_len / self.batch_size
    }

    /// `(warmup_steps, total_steps)` for a training fold of `train_len` samples.
    pub fn schedule(&self, train_len: usize) -> (usize, usize) {
        let total = self.max_epochs * self.batches_per_epoch(train_len);
        let warmup = (self.warmup_frac * total as f64).floor() as usize;
        (warmup, total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = TrainConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("batch_size = 5"));
        assert!(text.contains("[augment]"));
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = TrainConfig::from_toml_str("lr = 0.0\nseed = 3\n[augment]\napply_prob = 0.5\n").unwrap();
        assert_eq!(cfg.lr, 0.0);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.augment.apply_prob, 0.5);
        assert_eq!(cfg.augment.frame_dropout, 0.08);
        assert_eq!(cfg.patience, 10);
    }

    #[test]
    fn invalid_configs() {
        for text in ["batch_size = 1", "learning_rate = 0.1", "label_smoothing = 1.0", "lr = -1.0", "[augment]\nframe_dropout = 2.0"] {
            assert!(matches!(TrainConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let cfg = TrainConfig::default();
        // 900 training samples: 180 batches × 60 epochs
        assert_eq!(cfg.schedule(900), (540, 10_800));
        assert_eq!(cfg.batches_per_epoch(562), 112);
        assert_eq!(cfg.encoder_width(1024), 128);
        assert_eq!(cfg.encoder_width(16), 16);
    }
}
