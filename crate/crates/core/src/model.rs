//! The full predictor: run encoder, kick encoder, metadata branch and fusion head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Features, Phase};
use crate::error::{Error, Result};
use crate::fusion::{FusionCache, FusionHead, MetaBranch};
use crate::nn::{join, BatchStats, Mat, Module};
use crate::ssm::{LayerConfig, ScanMode};
use crate::temporal::{BranchEncoder, EncoderCache, EncoderConfig};

/// Which branches feed the fusion head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchSet {
    pub run: bool,
    pub kick: bool,
    pub meta: bool,
}

impl BranchSet {
    pub const ALL: BranchSet = BranchSet { run: true, kick: true, meta: true };
    pub const RUN: BranchSet = BranchSet { run: true, kick: false, meta: false };
    pub const RUN_KICK: BranchSet = BranchSet { run: true, kick: true, meta: false };

    /// The three rows of the branch-removal table, in order.
    pub const ABLATION_ROWS: [BranchSet; 3] = [BranchSet::RUN, BranchSet::RUN_KICK, BranchSet::ALL];

    pub fn is_empty(&self) -> bool {
        !(self.run || self.kick || self.meta)
    }

    /// Row label such as `Running + Kicking`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.run {
            parts.push("Running");
        }
        if self.kick {
            parts.push("Kicking");
        }
        if self.meta {
            parts.push("Metadata");
        }
        parts.join(" + ")
    }
}

impl fmt::Display for BranchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.run, "run"), (self.kick, "kick"), (self.meta, "meta")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for BranchSet {
    type Err = Error;

    /// Parses a comma list over `run`, `kick`, `meta`.
    fn from_str(s: &str) -> Result<Self> {
        let mut b = BranchSet { run: false, kick: false, meta: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "run" => b.run = true,
                "kick" => b.kick = true,
                "meta" => b.meta = true,
                other => return Err(Error::Config(format!("unknown branch `{other}` (expected run, kick, meta)"))),
            }
        }
        if b.is_empty() {
            return Err(Error::Config("branch set is empty".into()));
        }
        Ok(b)
    }
}

/// How excluded branches are removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// Keep the head's input width and feed zeros for excluded branches.
    #[default]
    ZeroInput,
    /// Build the head over the included branches only.
    NarrowHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub classes: usize,
    pub encoder_layers: usize,
    pub layer: LayerConfig,
    pub meta_dim: usize,
    pub fusion_hidden: usize,
    pub dropout: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub scan_mode: ScanMode,
    pub branches: BranchSet,
    pub exclusion: Exclusion,
}

impl ModelConfig {
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig { input_dim: self.input_dim, layers: self.encoder_layers, layer: self.layer }
    }

    /// Width of the concatenated vector entering the head.
    pub fn fusion_input_dim(&self) -> usize {
        let h = self.layer.width;
        match self.exclusion {
            Exclusion::ZeroInput => 2 * h + self.meta_dim,
            Exclusion::NarrowHead => {
                h * (self.branches.run as usize + self.branches.kick as usize)
                    + self.meta_dim * self.branches.meta as usize
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let l = &self.layer;
        if self.input_dim == 0 || l.width == 0 || l.state_size == 0 || l.expand == 0 || self.encoder_layers == 0 {
            return Err(Error::Config("dimensions, state size, expansion and layer count must be positive".into()));
        }
        if self.meta_dim == 0 || self.fusion_hidden == 0 {
            return Err(Error::Config("metadata and fusion widths must be positive".into()));
        }
        if !(l.dt_min > 0.0 && l.dt_min <= l.dt_max) {
            return Err(Error::Config(format!("invalid Δ init range [{}, {}]", l.dt_min, l.dt_max)));
        }
        if self.branches.is_empty() {
            return Err(Error::Config("at least one branch must be enabled".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub run: BranchEncoder,
    pub kick: BranchEncoder,
    pub meta: MetaBranch,
    pub head: FusionHead,
}

/// Intermediates of one training batch.
#[derive(Clone, Debug)]
pub struct BatchCache {
    run: Vec<EncoderCache>,
    kick: Vec<EncoderCache>,
    meta_in: Mat,
    meta_out: Mat,
    head: FusionCache,
    /// Batch-norm statistics to fold into the running averages after the step.
    pub bn_stats: BatchStats,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl ModelBundle {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let enc = config.encoder();
        let run = BranchEncoder::new(Phase::Run, &enc, rng);
        let kick = BranchEncoder::new(Phase::Kick, &enc, rng);
        let meta = MetaBranch::new(config.meta_dim, rng);
        let head = FusionHead::new(
            config.fusion_input_dim(),
            config.fusion_hidden,
            config.classes,
            config.dropout,
            config.bn_eps,
            config.bn_momentum,
            rng,
        )?;
        Ok(ModelBundle { config, run, kick, meta, head })
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    fn check_features(&self, f: &Features) -> Result<()> {
        let d = self.config.input_dim;
        if f.run.cols != d || f.kick.cols != d {
            return Err(Error::Shape(format!(
                "model expects embedding dimension {d}, sample has run {} / kick {}",
                f.run.cols, f.kick.cols
            )));
        }
        Ok(())
    }

    /// Lays branch vectors out in the head's input order.
    fn fuse(&self, run: Option<&[f64]>, kick: Option<&[f64]>, meta: Option<&[f64]>, out: &mut Vec<f64>) {
        let h = self.config.layer.width;
        let zero_fill = self.config.exclusion == Exclusion::ZeroInput;
        for (v, width) in [(run, h), (kick, h), (meta, self.config.meta_dim)] {
            match v {
                Some(v) => out.extend_from_slice(v),
                None if zero_fill => out.extend(std::iter::repeat_n(0.0, width)),
                None => {}
            }
        }
    }

    /// Splits a head-input gradient row back into branch gradients.
    fn split<'a>(&self, row: &'a [f64]) -> (Option<&'a [f64]>, Option<&'a [f64]>, Option<&'a [f64]>) {
        let b = self.config.branches;
        let h = self.config.layer.width;
        let zero_fill = self.config.exclusion == Exclusion::ZeroInput;
        let mut at = 0;
        let mut take = |on: bool, width: usize| {
            if on || zero_fill {
                let s = &row[at..at + width];
                at += width;
                on.then_some(s)
            } else {
                None
            }
        };
        let r = take(b.run, h);
        let k = take(b.kick, h);
        let m = take(b.meta, self.config.meta_dim);
        (r, k, m)
    }

    fn meta_input(batch: &[&Features]) -> Mat {
        Mat { rows: batch.len(), cols: 2, data: batch.iter().flat_map(|f| f.meta).collect() }
    }

    /// Batch-statistics forward with dropout; needs at least two samples.
    pub fn forward_train<R: Rng + ?Sized>(&self, batch: &[&Features], rng: &mut R) -> Result<(Mat, BatchCache)> {
        let b = self.config.branches;
        let mode = self.config.scan_mode;
        let mut run = Vec::new();
        let mut kick = Vec::new();
        let mut run_vecs = Vec::new();
        let mut kick_vecs = Vec::new();
        for f in batch {
            self.check_features(f)?;
            if b.run {
                let (v, c) = self.run.encode(&f.run, mode)?;
                run_vecs.push(v);
                run.push(c);
            }
            if b.kick {
                let (v, c) = self.kick.encode(&f.kick, mode)?;
                kick_vecs.push(v);
                kick.push(c);
            }
        }
        let meta_in = Self::meta_input(batch);
        let meta_out = if b.meta { self.meta.forward(&meta_in)? } else { Mat::zeros(batch.len(), 0) };
        let width = self.head.input_dim();
        let mut z = Vec::with_capacity(batch.len() * width);
        for i in 0..batch.len() {
            self.fuse(
                b.run.then(|| run_vecs[i].as_slice()),
                b.kick.then(|| kick_vecs[i].as_slice()),
                b.meta.then(|| meta_out.row(i)),
                &mut z,
            );
        }
        let z = Mat::from_vec(batch.len(), width, z)?;
        let (logits, head, bn_stats) = self.head.forward_train(&z, rng)?;
        Ok((logits, BatchCache { run, kick, meta_in, meta_out, head, bn_stats }))
    }

    /// Accumulates parameter gradients of a training batch into `grad`.
    pub fn backward(&self, cache: &BatchCache, d_logits: &Mat, grad: &mut ModelBundle) -> Result<()> {
        let dz = self.head.backward(&cache.head, d_logits, &mut grad.head)?;
        let mut d_meta = Mat::zeros(dz.rows, self.config.meta_dim);
        for i in 0..dz.rows {
            let (dr, dk, dm) = self.split(dz.row(i));
            if let Some(dr) = dr {
                self.run.backward(&cache.run[i], dr, &mut grad.run)?;
            }
            if let Some(dk) = dk {
                self.kick.backward(&cache.kick[i], dk, &mut grad.kick)?;
            }
            if let Some(dm) = dm {
                d_meta.row_mut(i).copy_from_slice(dm);
            }
        }
        if self.config.branches.meta {
            self.meta.backward(&cache.meta_in, &cache.meta_out, &d_meta, &mut grad.meta);
        }
        Ok(())
    }

    /// Eval-mode logits for one sample.
    pub fn logits(&self, f: &Features) -> Result<Vec<f64>> {
        self.check_features(f)?;
        let b = self.config.branches;
        let mode = self.config.scan_mode;
        let run = if b.run { Some(self.run.encode(&f.run, mode)?.0) } else { None };
        let kick = if b.kick { Some(self.kick.encode(&f.kick, mode)?.0) } else { None };
        let meta = if b.meta { Some(self.meta.forward(&Self::meta_input(&[f]))?.data) } else { None };
        let mut z = Vec::with_capacity(self.head.input_dim());
        self.fuse(run.as_deref(), kick.as_deref(), meta.as_deref(), &mut z);
        let z = Mat::from_vec(1, z.len(), z)?;
        Ok(self.head.forward_eval(&z)?.data)
    }

    pub fn predict(&self, f: &Features) -> Result<usize> {
        Ok(argmax(&self.logits(f)?))
    }
}

impl Module for ModelBundle {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.run.visit_params(&join(prefix, "run"), f);
        self.kick.visit_params(&join(prefix, "kick"), f);
        self.meta.visit_params(&join(prefix, "meta"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.run.visit_params_mut(f);
        self.kick.visit_params_mut(f);
        self.meta.visit_params_mut(f);
        self.head.visit_params_mut(f);
    }
}
