//! Cross-validation, branch ablation and the on-disk run directory.
//!
//! A run directory has a fixed layout:
//!
//! ```text
//! run/
//!   config.toml            snapshot of the training config
//!   run.json               what was run and whether it finished
//!   fold_00/checkpoint.json
//!   fold_00/history.tsv
//!   ...
//!   summary.json           per-fold and aggregate results (crossval)
//!   ablation.json          ablation rows (ablate)
//!   reports/               rendered tables, key-value files, heatmaps
//! ```
//!
//! Folds may train in parallel; only the coordinating thread writes files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{binarize, stratified_kfold, Dataset, FoldSplit, LabelSpace};
use crate::error::{Error, Result};
use crate::metrics::export::{
    ablation_table, confusion_svg, confusion_text, mean_kv, render_table, report_kv, results_table, subgroup_table, AblationRow,
    ResultRow,
};
use crate::metrics::{evaluate, gk_baseline, ConfusionMatrix, MeanMetrics, MetricReport, SubgroupReport};
use crate::model::{BranchSet, Exclusion};
use crate::train::checkpoint::CHECKPOINT_VERSION;
use crate::train::{train_model, BranchOptions, Checkpoint, History, TrainConfig};

pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ABLATION_FILE: &str = "ablation.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORTS_DIR: &str = "reports";

/// Switches a dataset to the requested label space, noting any samples
/// dropped on the way.
pub fn prepare_dataset(ds: &Dataset, space: LabelSpace) -> Result<(Dataset, Option<String>)> {
    match (ds.label_space, space) {
        (a, b) if a == b => Ok((ds.clone(), None)),
        (LabelSpace::ThreeClass, LabelSpace::TwoClass) => {
            let out = binarize(ds);
            let note = format!(
                "binarized: {} -> {} samples ({} center samples dropped)",
                ds.len(),
                out.len(),
                ds.len() - out.len()
            );
            Ok((out, Some(note)))
        }
        (LabelSpace::TwoClass, LabelSpace::ThreeClass) => {
            Err(Error::Config("a two-class dataset cannot be evaluated with three classes".into()))
        }
        _ => unreachable!(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub seed: u64,
    pub train_samples: usize,
    pub val_samples: usize,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub report: MetricReport,
    pub confusion: ConfusionMatrix,
    pub subgroups: SubgroupReport,
    pub gk: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalkeeperSummary {
    pub mean: MeanMetrics,
    pub pooled: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValSummary {
    /// Embedding source, shown in the Architecture column.
    pub backbone: String,
    pub label_space: LabelSpace,
    pub samples: usize,
    pub folds: usize,
    pub options: BranchOptions,
    pub per_fold: Vec<FoldSummary>,
    /// Fold-mean of each headline score.
    pub mean: MeanMetrics,
    /// All validation predictions in one matrix.
    pub pooled: ConfusionMatrix,
    pub pooled_report: MetricReport,
    pub subgroups: SubgroupReport,
    pub goalkeeper: Option<GoalkeeperSummary>,
    pub notes: Vec<String>,
}

impl CrossValSummary {
    pub fn class_names(&self) -> Vec<&'static str> {
        self.label_space.class_names()
    }
}

/// Everything one fold produced, including the trained weights.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub summary: FoldSummary,
    pub checkpoint: Checkpoint,
}

#[derive(Clone, Debug)]
pub struct CrossValRun {
    pub summary: CrossValSummary,
    pub folds: Vec<FoldOutcome>,
}

impl CrossValRun {
    pub fn histories(&self) -> impl Iterator<Item = &History> {
        self.folds.iter().map(|f| &f.checkpoint.history)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossValOptions {
    pub label_space: LabelSpace,
    pub branches: BranchOptions,
    /// Worker threads for fold-level parallelism; 1 runs folds in order.
    pub jobs: usize,
}

impl Default for CrossValOptions {
    fn default() -> Self {
        CrossValOptions { label_space: LabelSpace::ThreeClass, branches: BranchOptions::default(), jobs: 1 }
    }
}

fn run_fold(
    ds: &Dataset,
    split: &FoldSplit,
    split_fold: usize,
    cfg: &TrainConfig,
    opts: BranchOptions,
    with_gk: bool,
) -> Result<FoldOutcome> {
    let train = ds.subset(&split.train_indices(split_fold));
    let val = ds.subset(&split.val_indices(split_fold));
    let seed = cfg.seed.wrapping_add(split_fold as u64);
    let trained = train_model(&train, &val, cfg, opts, seed)?;
    let eval = evaluate(&trained.model, &val.samples, ds.label_space)?;
    let gk = if with_gk { Some(gk_baseline(&val.samples, ds.label_space)?.1) } else { None };
    let summary = FoldSummary {
        fold: split_fold,
        seed,
        train_samples: train.len(),
        val_samples: val.len(),
        best_epoch: trained.history.best_epoch,
        stopped_epoch: trained.history.stopped_epoch(),
        report: eval.report,
        confusion: eval.confusion,
        subgroups: eval.subgroups,
        gk,
    };
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        fold: Some(split_fold),
        config: cfg.clone(),
        model: trained.model,
        optimizer: trained.optimizer,
        history: trained.history,
    };
    Ok(FoldOutcome { summary, checkpoint })
}

/// Stratified k-fold training and evaluation.
///
/// Folds come from `cfg.seed`; fold `i` trains with seed `cfg.seed + i`.
/// Fold feasibility is checked before any training starts.
pub fn cross_validate(ds: &Dataset, cfg: &TrainConfig, opts: CrossValOptions) -> Result<CrossValRun> {
    cfg.validate()?;
    ds.validate()?;
    let (ds, note) = prepare_dataset(ds, opts.label_space)?;
    let mut notes: Vec<String> = note.into_iter().collect();
    let labels = ds.labels()?;
    let ids: Vec<String> = ds.samples.iter().map(|s| s.id.clone()).collect();
    let split = stratified_kfold(&ids, &labels, ds.label_space.classes(), cfg.folds, cfg.seed)?;

    let with_gk = ds.samples.iter().all(|s| s.gk_direction.is_some());
    if !with_gk {
        let missing = ds.samples.iter().filter(|s| s.gk_direction.is_none()).count();
        notes.push(format!("goalkeeper row omitted: {missing} samples lack a goalkeeper direction"));
    }

    let folds: Vec<usize> = (0..cfg.folds).collect();
    let work = |f: &usize| run_fold(&ds, &split, *f, cfg, opts.branches, with_gk);
    let outcomes: Vec<FoldOutcome> = if opts.jobs <= 1 {
        folds.iter().map(work).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", opts.jobs)))?;
        pool.install(|| folds.par_iter().map(work).collect::<Result<_>>())?
    };

    let reports: Vec<MetricReport> = outcomes.iter().map(|o| o.summary.report.clone()).collect();
    let names = ds.label_space.class_names();
    let mut pooled = ConfusionMatrix::new(ds.label_space.classes());
    let mut subgroups = outcomes[0].summary.subgroups.clone();
    for (i, o) in outcomes.iter().enumerate() {
        pooled.merge(&o.summary.confusion);
        if i > 0 {
            subgroups.merge(&o.summary.subgroups);
        }
    }
    let goalkeeper = if with_gk {
        let gk_reports: Vec<MetricReport> = outcomes.iter().filter_map(|o| o.summary.gk.clone()).collect();
        let (gk_pooled, _) = gk_baseline(&ds.samples, ds.label_space)?;
        Some(GoalkeeperSummary { mean: MeanMetrics::of(&gk_reports), pooled: gk_pooled })
    } else {
        None
    };
    let summary = CrossValSummary {
        backbone: ds.backbone.clone(),
        label_space: ds.label_space,
        samples: ds.len(),
        folds: cfg.folds,
        options: opts.branches,
        per_fold: outcomes.iter().map(|o| o.summary.clone()).collect(),
        mean: MeanMetrics::of(&reports),
        pooled_report: MetricReport::from_confusion(&pooled, &names)?,
        pooled,
        subgroups,
        goalkeeper,
        notes,
    };
    Ok(CrossValRun { summary, folds: outcomes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub classes: usize,
    pub branches: BranchSet,
    pub mean: MeanMetrics,
    pub pooled_accuracy: f64,
}

impl AblationEntry {
    pub fn row(&self) -> AblationRow {
        AblationRow { classes: self.classes, branches: self.branches, metrics: self.mean }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub exclusion: Exclusion,
    pub entries: Vec<AblationEntry>,
}

/// Rejects branch subsets the ablation does not support: the running
/// branch is kept in every row.
pub fn check_ablation_rows(rows: &[BranchSet]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no branch subsets requested".into()));
    }
    for b in rows {
        if b.is_empty() {
            return Err(Error::Config("branch set is empty".into()));
        }
        if !b.run {
            return Err(Error::Config(format!("branch set `{b}` lacks the running branch, which every ablation row keeps")));
        }
    }
    Ok(())
}

/// One cross-validation per (label space, branch subset) pair, in the
/// order given.
pub fn run_ablation(
    ds: &Dataset,
    cfg: &TrainConfig,
    spaces: &[LabelSpace],
    rows: &[BranchSet],
    exclusion: Exclusion,
    jobs: usize,
) -> Result<(AblationSummary, Vec<CrossValRun>)> {
    check_ablation_rows(rows)?;
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    for &space in spaces {
        for &branches in rows {
            let opts = CrossValOptions { label_space: space, branches: BranchOptions { branches, exclusion }, jobs };
            let run = cross_validate(ds, cfg, opts)?;
            entries.push(AblationEntry {
                classes: space.classes(),
                branches,
                mean: run.summary.mean,
                pooled_accuracy: run.summary.pooled.accuracy(),
            });
            runs.push(run);
        }
    }
    Ok((AblationSummary { exclusion, entries }, runs))
}

/// Bookkeeping stored in `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub kind: String,
    pub dataset: String,
    pub complete: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::IncompleteRun(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn fold_dir(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join(format!("fold_{fold:02}"))
}

fn start_run(run_dir: &Path, cfg: &TrainConfig, kind: &str, dataset: &str) -> Result<()> {
    fs::create_dir_all(run_dir.join(REPORTS_DIR))?;
    cfg.save(run_dir.join(CONFIG_FILE))?;
    write_json(&run_dir.join(RUN_FILE), &RunInfo { kind: kind.into(), dataset: dataset.into(), complete: false })
}

fn finish_run(run_dir: &Path, kind: &str, dataset: &str) -> Result<()> {
    write_json(&run_dir.join(RUN_FILE), &RunInfo { kind: kind.into(), dataset: dataset.into(), complete: true })
}

fn write_folds(run_dir: &Path, run: &CrossValRun) -> Result<()> {
    for f in &run.folds {
        let dir = fold_dir(run_dir, f.summary.fold);
        fs::create_dir_all(&dir)?;
        f.checkpoint.save(dir.join("checkpoint.json"))?;
        fs::write(dir.join("history.tsv"), f.checkpoint.history.to_tsv())?;
        write_json(&dir.join("report.json"), &f.summary)?;
    }
    Ok(())
}

/// Writes a finished cross-validation into `run_dir` and renders its
/// text reports.
pub fn write_crossval(run_dir: &Path, cfg: &TrainConfig, dataset: &str, run: &CrossValRun) -> Result<()> {
    start_run(run_dir, cfg, "crossval", dataset)?;
    write_folds(run_dir, run)?;
    write_json(&run_dir.join(SUMMARY_FILE), &run.summary)?;
    finish_run(run_dir, "crossval", dataset)?;
    render_report(run_dir, ReportFormat::Text)?;
    Ok(())
}

/// Writes an ablation: one sub-run per row under `rows/`, plus the table.
pub fn write_ablation(
    run_dir: &Path,
    cfg: &TrainConfig,
    dataset: &str,
    summary: &AblationSummary,
    runs: &[CrossValRun],
) -> Result<()> {
    start_run(run_dir, cfg, "ablate", dataset)?;
    for (entry, run) in summary.entries.iter().zip(runs) {
        let sub = run_dir.join("rows").join(format!("{}c_{}", entry.classes, entry.branches.to_string().replace(',', "+")));
        write_crossval(&sub, cfg, dataset, run)?;
    }
    write_json(&run_dir.join(ABLATION_FILE), summary)?;
    finish_run(run_dir, "ablate", dataset)?;
    render_report(run_dir, ReportFormat::Text)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format `{other}` (expected text or svg)"))),
        }
    }
}

/// Results table for one cross-validation: the model row and, when
/// available, the goalkeeper row.
pub fn crossval_results_table(s: &CrossValSummary) -> String {
    let mut rows = vec![ResultRow {
        architecture: s.backbone.clone(),
        best_model: "MambaKick".into(),
        reference: "-".into(),
        metrics: s.mean,
    }];
    if let Some(gk) = &s.goalkeeper {
        rows.insert(0, ResultRow::goalkeeper(gk.mean));
    }
    results_table(&rows)
}

/// Full text rendering of a cross-validation summary.
pub fn crossval_text(s: &CrossValSummary) -> String {
    let names = s.class_names();
    let mut out = format!("{} classes, {} samples, {}-fold\n\n", s.label_space.classes(), s.samples, s.folds);
    out.push_str(&crossval_results_table(s));
    out.push_str("\nPer fold\n");
    let body: Vec<Vec<String>> = s
        .per_fold
        .iter()
        .map(|f| {
            vec![
                f.fold.to_string(),
                f.val_samples.to_string(),
                f.best_epoch.to_string(),
                format!("{:.1}", 100.0 * f.report.accuracy),
                format!("{:.1}", 100.0 * f.report.macro_f1),
            ]
        })
        .collect();
    out.push_str(&render_table(&["Fold", "n", "Best epoch", "Acc. (%)", "F1 (%)"], &body, 0));
    out.push_str("\nPooled confusion matrix\n");
    out.push_str(&confusion_text(&s.pooled, &names));
    out.push_str("\nSubgroups\n");
    out.push_str(&subgroup_table(&s.subgroups));
    for n in &s.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

pub fn crossval_kv(s: &CrossValSummary) -> String {
    let mut out = mean_kv("mean", &s.mean);
    out.push_str(&report_kv("pooled", &s.pooled_report));
    for f in &s.per_fold {
        out.push_str(&report_kv(&format!("fold_{:02}", f.fold), &f.report));
    }
    if let Some(gk) = &s.goalkeeper {
        out.push_str(&mean_kv("goalkeeper", &gk.mean));
    }
    out
}

/// Re-renders the reports of a finished run directory and returns the
/// paths written. Rendering is deterministic.
pub fn render_report(run_dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let info: RunInfo = read_json(&run_dir.join(RUN_FILE))?;
    if !info.complete {
        return Err(Error::IncompleteRun(format!("{} did not finish", run_dir.display())));
    }
    let summary_path = run_dir.join(SUMMARY_FILE);
    let ablation_path = run_dir.join(ABLATION_FILE);
    let summary: Option<CrossValSummary> = summary_path.exists().then(|| read_json(&summary_path)).transpose()?;
    let ablation: Option<AblationSummary> = ablation_path.exists().then(|| read_json(&ablation_path)).transpose()?;
    if summary.is_none() && ablation.is_none() {
        return Err(Error::IncompleteRun(format!("{} holds neither {SUMMARY_FILE} nor {ABLATION_FILE}", run_dir.display())));
    }
    if let Some(s) = &summary {
        for f in 0..s.folds {
            let ck = fold_dir(run_dir, f).join("checkpoint.json");
            if !ck.exists() {
                return Err(Error::IncompleteRun(format!("missing {}", ck.display())));
            }
        }
    }
    let reports = run_dir.join(REPORTS_DIR);
    fs::create_dir_all(&reports)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = reports.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    match format {
        ReportFormat::Text => {
            if let Some(s) = &summary {
                put("results.txt", crossval_text(s))?;
                put("metrics.kv", crossval_kv(s))?;
            }
            if let Some(a) = &ablation {
                let rows: Vec<AblationRow> = a.entries.iter().map(AblationEntry::row).collect();
                put("ablation.txt", ablation_table(&rows))?;
            }
        }
        ReportFormat::Svg => {
            if let Some(s) = &summary {
                let names = s.class_names();
                let title = format!("{} classes, pooled over {} folds", s.label_space.classes(), s.folds);
                put("confusion_pooled.svg", confusion_svg(&s.pooled, &names, &title))?;
                if let Some(gk) = &s.goalkeeper {
                    put("confusion_goalkeeper.svg", confusion_svg(&gk.pooled, &names, "Goalkeeper"))?;
                }
                for f in &s.per_fold {
                    let title = format!("Fold {}", f.fold);
                    put(&format!("confusion_fold_{:02}.svg", f.fold), confusion_svg(&f.confusion, &names, &title))?;
                }
            }
            if summary.is_none() {
                return Err(Error::IncompleteRun("svg reports need a cross-validation summary".into()));
            }
        }
    }
    Ok(written)
}
