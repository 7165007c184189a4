//! Accuracy, macro precision/recall/F1, confusion matrices, metadata
//! subgroups and the goalkeeper baseline.

pub mod export;
mod subgroup;

pub use subgroup::{subgroup_report, Subgroup, SubgroupReport, SubgroupRow};

use serde::{Deserialize, Serialize};

use crate::data::{Features, LabelSpace, PenaltySample};
use crate::error::{Error, Result};
use crate::model::ModelBundle;

/// Rows are true classes, columns predicted classes.
///
/// `outside` counts, per true class, predictions that fall outside the
/// label space (a goalkeeper diving center in the two-class setting). They
/// count as errors and belong to their row's total.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub outside: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; classes]; classes], outside: vec![0; classes] }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, pred: Option<usize>) {
        match pred {
            Some(p) => self.counts[truth][p] += 1,
            None => self.outside[truth] += 1,
        }
    }

    pub fn from_predictions(classes: usize, truth: &[usize], preds: &[usize]) -> Result<Self> {
        if truth.len() != preds.len() {
            return Err(Error::Shape(format!("{} labels for {} predictions", truth.len(), preds.len())));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(preds) {
            if t >= classes || p >= classes {
                return Err(Error::LabelOutOfRange { label: t.max(p), classes });
            }
            cm.add(t, Some(p));
        }
        Ok(cm)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, row) in other.counts.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                self.counts[r][c] += v;
            }
            self.outside[r] += other.outside[r];
        }
    }

    pub fn row_total(&self, r: usize) -> usize {
        self.counts[r].iter().sum::<usize>() + self.outside[r]
    }

    pub fn col_total(&self, c: usize) -> usize {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn total(&self) -> usize {
        (0..self.classes()).map(|r| self.row_total(r)).sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Each row divided by its total; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        (0..self.classes())
            .map(|r| {
                let n = self.row_total(r);
                self.counts[r].iter().map(|&v| if n == 0 { 0.0 } else { v as f64 / n as f64 }).collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricReport {
    /// Per-class and macro-averaged scores. A class with no true and no
    /// predicted samples scores 0 on every metric.
    pub fn from_confusion(cm: &ConfusionMatrix, names: &[&str]) -> Result<Self> {
        if cm.total() == 0 {
            return Err(Error::InvalidInput("cannot score an empty sample set".into()));
        }
        let per_class: Vec<ClassMetrics> = (0..cm.classes())
            .map(|k| {
                let tp = cm.counts[k][k];
                let precision = ratio(tp, cm.col_total(k));
                let recall = ratio(tp, cm.row_total(k));
                let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
                ClassMetrics { name: names.get(k).unwrap_or(&"?").to_string(), support: cm.row_total(k), precision, recall, f1 }
            })
            .collect();
        let n = per_class.len() as f64;
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
        Ok(MetricReport {
            samples: cm.total(),
            accuracy: cm.accuracy(),
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            per_class,
        })
    }
}

/// Outcome of scoring a model on a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricReport,
    pub predictions: Vec<usize>,
    pub subgroups: SubgroupReport,
}

/// Eval-mode predictions for every sample.
pub fn predict_all(model: &ModelBundle, samples: &[PenaltySample]) -> Result<Vec<usize>> {
    samples.iter().map(|s| model.predict(&Features::from(s))).collect()
}

pub fn evaluate(model: &ModelBundle, samples: &[PenaltySample], space: LabelSpace) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty sample set".into()));
    }
    if model.classes() != space.classes() {
        return Err(Error::Config(format!(
            "model predicts {} classes but the data has {}",
            model.classes(),
            space.classes()
        )));
    }
    let truth = class_labels(samples, space)?;
    let predictions = predict_all(model, samples)?;
    let confusion = ConfusionMatrix::from_predictions(space.classes(), &truth, &predictions)?;
    let report = MetricReport::from_confusion(&confusion, &space.class_names())?;
    let metas: Vec<_> = samples.iter().map(|s| s.meta).collect();
    let subgroups = subgroup_report(&metas, &truth, &predictions)?;
    Ok(Evaluation { confusion, report, predictions, subgroups })
}

pub fn class_labels(samples: &[PenaltySample], space: LabelSpace) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| {
            space.class_of(s.label).ok_or_else(|| Error::SampleDimension {
                id: s.id.clone(),
                reason: format!("label {} is not a class in this label space", s.label.name()),
            })
        })
        .collect()
}

/// Scores the goalkeeper's dive as if it were a prediction.
pub fn gk_baseline(samples: &[PenaltySample], space: LabelSpace) -> Result<(ConfusionMatrix, MetricReport)> {
    let missing: Vec<String> = samples.iter().filter(|s| s.gk_direction.is_none()).map(|s| s.id.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingGoalkeeper { ids: missing });
    }
    let truth = class_labels(samples, space)?;
    let mut cm = ConfusionMatrix::new(space.classes());
    for (s, &t) in samples.iter().zip(&truth) {
        cm.add(t, s.gk_direction.and_then(|d| space.class_of(d)));
    }
    let report = MetricReport::from_confusion(&cm, &space.class_names())?;
    Ok((cm, report))
}

/// Fold-mean of the headline scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MeanMetrics {
    pub fn of(reports: &[MetricReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MeanMetrics {
            accuracy: mean(|r| r.accuracy),
            precision: mean(|r| r.macro_precision),
            recall: mean(|r| r.macro_recall),
            f1: mean(|r| r.macro_f1),
        }
    }

    pub fn single(r: &MetricReport) -> Self {
        MeanMetrics { accuracy: r.accuracy, precision: r.macro_precision, recall: r.macro_recall, f1: r.macro_f1 }
    }
}
