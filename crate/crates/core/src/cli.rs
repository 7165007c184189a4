//! Command-line front end. The binary only calls [`main`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    generate_synthetic, load_dataset, save_dataset, stratified_kfold, Dataset, DatasetManifest, LabelSpace, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::experiment::{
    check_ablation_rows, cross_validate, crossval_text, fold_dir, prepare_dataset, render_report, run_ablation,
    write_ablation, write_crossval, CrossValOptions, ReportFormat, CONFIG_FILE,
};
use crate::metrics::export::{ablation_table, confusion_text, report_kv, subgroup_table};
use crate::metrics::evaluate;
use crate::model::{BranchSet, Exclusion};
use crate::nn::Module;
use crate::train::{train_model, BranchOptions, Checkpoint, TrainConfig};

// Output goes through these so a closed pipe (`| head`) is not a panic.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "MAMBAKICK_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "mambakick", version, about = "Penalty-direction prediction from clip embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-signal synthetic dataset.
    Generate(GenerateArgs),
    /// Train on one fold of the stratified split.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Branch-removal ablation.
    Ablate(AblateArgs),
    /// Re-render the reports of a finished run directory.
    Report(ReportArgs),
    /// Describe a dataset, checkpoint or run directory.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 622)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub run_len: usize,
    #[arg(long, default_value_t = 3)]
    pub kick_len: usize,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML config; missing keys take the defaults.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArg {
    pub fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, default_value_t = 3, value_parser = parse_classes)]
    pub classes: usize,
    /// Held-out fold used for validation.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value = "run,kick,meta")]
    pub branches: String,
    #[arg(long)]
    pub retrain_head: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = parse_classes)]
    pub classes: usize,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, default_value_t = 3, value_parser = parse_classes)]
    pub classes: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "run,kick,meta")]
    pub branches: String,
    /// Narrow the fusion head to the included branches instead of zeroing.
    #[arg(long)]
    pub retrain_head: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// One branch subset per flag, e.g. `--branches run --branches run,kick`.
    /// Defaults to the three table rows.
    #[arg(long)]
    pub branches: Vec<String>,
    /// Label spaces to ablate, in order.
    #[arg(long, value_delimiter = ',', default_value = "3", value_parser = parse_classes)]
    pub classes: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub retrain_head: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A dataset file, a checkpoint, or a run directory.
    pub path: PathBuf,
}

fn parse_classes(s: &str) -> std::result::Result<usize, String> {
    match s.trim() {
        "2" => Ok(2),
        "3" => Ok(3),
        other => Err(format!("`{other}` is not 2 or 3")),
    }
}

fn exclusion(retrain_head: bool) -> Exclusion {
    if retrain_head {
        Exclusion::NarrowHead
    } else {
        Exclusion::ZeroInput
    }
}

fn manifest_line(m: &DatasetManifest) -> String {
    format!(
        "{} samples, dim {}, run {} clips, kick {} clips, {} classes {:?}, backbone {}",
        m.sample_count, m.embedding_dim, m.run_len, m.kick_len, m.label_space.classes(), m.class_counts, m.backbone
    )
}

fn load_for(path: &Path, classes: usize) -> Result<Dataset> {
    let ds = load_dataset(path)?;
    let (ds, note) = prepare_dataset(&ds, LabelSpace::from_classes(classes)?)?;
    if let Some(n) = note {
        eprintln!("{n}");
    }
    Ok(ds)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        num_samples: a.samples,
        dim: a.dim,
        run_len: a.run_len,
        kick_len: a.kick_len,
        signal_strength: a.signal,
        noise_std: a.noise,
        seed: a.seed,
        ..Default::default()
    };
    let ds = generate_synthetic(&cfg)?;
    save_dataset(&a.out, &ds)?;
    outln!("wrote {}: {}", a.out.display(), manifest_line(&ds.manifest()));
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let ds = load_for(&a.data, a.classes)?;
    let labels = ds.labels()?;
    let ids: Vec<String> = ds.samples.iter().map(|s| s.id.clone()).collect();
    let split = stratified_kfold(&ids, &labels, ds.label_space.classes(), cfg.folds, cfg.seed)?;
    if a.fold >= cfg.folds {
        return Err(Error::Config(format!("fold {} out of range for {} folds", a.fold, cfg.folds)));
    }
    let train = ds.subset(&split.train_indices(a.fold));
    let val = ds.subset(&split.val_indices(a.fold));
    let opts = BranchOptions { branches: a.branches.parse()?, exclusion: exclusion(a.retrain_head) };
    let seed = cfg.seed.wrapping_add(a.fold as u64);
    let trained = train_model(&train, &val, &cfg, opts, seed)?;
    let eval = evaluate(&trained.model, &val.samples, ds.label_space)?;

    fs::create_dir_all(&a.out_dir)?;
    cfg.save(a.out_dir.join(CONFIG_FILE))?;
    let dir = fold_dir(&a.out_dir, a.fold);
    fs::create_dir_all(&dir)?;
    let ck = Checkpoint {
        version: crate::train::checkpoint::CHECKPOINT_VERSION,
        fold: Some(a.fold),
        config: cfg.clone(),
        model: trained.model,
        optimizer: trained.optimizer,
        history: trained.history,
    };
    ck.save(dir.join("checkpoint.json"))?;
    fs::write(dir.join("history.tsv"), ck.history.to_tsv())?;
    outln!(
        "fold {}: {} train / {} val, best epoch {} of {}, val accuracy {:.4}",
        a.fold,
        train.len(),
        val.len(),
        ck.history.best_epoch,
        ck.history.stopped_epoch(),
        eval.report.accuracy
    );
    outln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = load_for(&a.data, a.classes)?;
    let eval = evaluate(&ck.model, &ds.samples, ds.label_space)?;
    let names = ds.label_space.class_names();
    out!("{}", report_kv("eval", &eval.report));
    out!("{}", confusion_text(&eval.confusion, &names));
    out!("{}", subgroup_table(&eval.subgroups));
    Ok(())
}

fn cmd_crossval(a: &CrossvalArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let ds = load_dataset(&a.data)?;
    let opts = CrossValOptions {
        label_space: LabelSpace::from_classes(a.classes)?,
        branches: BranchOptions { branches: a.branches.parse()?, exclusion: exclusion(a.retrain_head) },
        jobs: a.jobs,
    };
    let run = cross_validate(&ds, &cfg, opts)?;
    for n in &run.summary.notes {
        eprintln!("warning: {n}");
    }
    write_crossval(&a.out_dir, &cfg, &a.data.display().to_string(), &run)?;
    out!("{}", crossval_text(&run.summary));
    outln!("wrote {}", a.out_dir.display());
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let rows: Vec<BranchSet> = if a.branches.is_empty() {
        BranchSet::ABLATION_ROWS.to_vec()
    } else {
        a.branches.iter().map(|b| b.parse()).collect::<Result<_>>()?
    };
    check_ablation_rows(&rows)?;
    let cfg = a.config.load()?;
    let ds = load_dataset(&a.data)?;
    let spaces: Vec<LabelSpace> = a.classes.iter().map(|&c| LabelSpace::from_classes(c)).collect::<Result<_>>()?;
    let (summary, runs) = run_ablation(&ds, &cfg, &spaces, &rows, exclusion(a.retrain_head), a.jobs)?;
    write_ablation(&a.out_dir, &cfg, &a.data.display().to_string(), &summary, &runs)?;
    let table: Vec<_> = summary.entries.iter().map(|e| e.row()).collect();
    out!("{}", ablation_table(&table));
    outln!("wrote {}", a.out_dir.display());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let written = render_report(&a.run_dir, a.format.parse::<ReportFormat>()?)?;
    for p in written {
        outln!("{}", p.display());
    }
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let p = &a.path;
    if p.is_dir() {
        let summary = p.join(crate::experiment::SUMMARY_FILE);
        if summary.exists() {
            let s: crate::experiment::CrossValSummary = serde_json::from_str(&fs::read_to_string(summary)?)?;
            out!("{}", crossval_text(&s));
            return Ok(());
        }
        let abl = p.join(crate::experiment::ABLATION_FILE);
        if abl.exists() {
            let s: crate::experiment::AblationSummary = serde_json::from_str(&fs::read_to_string(abl)?)?;
            let rows: Vec<_> = s.entries.iter().map(|e| e.row()).collect();
            out!("{}", ablation_table(&rows));
            return Ok(());
        }
        return Err(Error::IncompleteRun(format!("{} holds no results", p.display())));
    }
    if p.extension().is_some_and(|e| e == "json") {
        let ck = Checkpoint::load(p)?;
        let m = &ck.model.config;
        outln!("checkpoint version {}, fold {:?}", ck.version, ck.fold);
        outln!(
            "input dim {}, {} classes, branches {}, exclusion {:?}, {} parameters",
            m.input_dim,
            m.classes,
            m.branches,
            m.exclusion,
            ck.model.num_params()
        );
        let h = &ck.history;
        outln!(
            "{} epochs, best epoch {} (val accuracy {:.4}), {} steps, warmup {}",
            h.stopped_epoch(),
            h.best_epoch,
            h.best_val_accuracy,
            h.steps.len(),
            h.warmup_steps
        );
        return Ok(());
    }
    let ds = load_dataset(p)?;
    outln!("{}", manifest_line(&ds.manifest()));
    let gk = ds.samples.iter().filter(|s| s.gk_direction.is_some()).count();
    outln!("goalkeeper direction present for {gk} of {} samples", ds.len());
    if ds.label_space == LabelSpace::ThreeClass {
        outln!("two-class view: {} samples", crate::data::binarize(&ds).len());
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Crossval(a) => cmd_crossval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
