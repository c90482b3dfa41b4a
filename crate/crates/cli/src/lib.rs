//! Command-line driver: dataset generation, training, evaluation and SVG reports.

pub mod manifest;
pub mod plots;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nirbench_core::datagen::{audit_correlation, generate_dataset};
use nirbench_core::features::{feature_names, feature_names_for};
use nirbench_core::foundation::NoiseToggles;
use nirbench_core::metrics::{write_benchmark_csv, ModelReport};
use nirbench_core::neural::{read_history_csv, write_history_csv};
use nirbench_core::pipeline::{
    evaluate, read_predictions_csv, train_model, write_predictions_csv, ModelId, StoredModel,
};
use nirbench_core::{Dataset, Error, ScenarioConfig};

use manifest::{unix_now, RunManifest};

pub const DATASET_FILE: &str = "dataset.csv";
pub const AUDIT_FILE: &str = "audit.json";
pub const BENCHMARK_FILE: &str = "reports/benchmark.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 usage, 3 data, 4 numeric or training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                Error::Domain(_)
                | Error::Dimension(_)
                | Error::State(_)
                | Error::Parameter(_)
                | Error::Solver(_)
                | Error::Training { .. } => 4,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nirbench", version, about = "NIR glucose sensing simulator and model benchmark")]
pub struct Cli {
    /// Scenario file with `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed and NIRBENCH_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Turn off every noise source.
    #[arg(long, global = true)]
    pub no_noise: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "nirbench-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the dataset and its correlation audit.
    Generate,
    /// Train one model, or all six when `--model` is omitted.
    Train(ModelArgs),
    /// Evaluate trained models on the test split.
    Eval(EvalArgs),
    /// Render SVG plots from the reports.
    Report,
    /// generate, train all, eval and report in one run.
    Bench(BenchArgs),
    /// Print the feature names of the ridge model.
    Features {
        #[arg(long)]
        list: bool,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: Option<ModelId>,
    /// Dataset CSV; defaults to `<out>/dataset.csv`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub target: ModelArgs,
    /// Also measure inference time (machine dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub timing: bool,
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_config(cli: &Cli) -> CliResult<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.apply_seed_override(cli.seed)?;
    if cli.no_noise {
        cfg.noise = NoiseToggles::NONE;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn model_path(out: &Path, id: ModelId) -> PathBuf {
    out.join("models").join(format!("{id}.json"))
}

pub fn history_path(out: &Path, id: ModelId) -> PathBuf {
    out.join("models").join(format!("{id}_history.csv"))
}

pub fn report_path(out: &Path, id: ModelId) -> PathBuf {
    out.join("reports").join(format!("{id}.json"))
}

pub fn predictions_path(out: &Path, id: ModelId) -> PathBuf {
    out.join("reports").join(format!("{id}_predictions.csv"))
}

fn dataset_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join(DATASET_FILE))
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "dataset {} not found; run `nirbench generate` first",
            path.display()
        )));
    }
    Ok(Dataset::read(path)?)
}

/// Writes the dataset, its sidecar and the correlation audit.
pub fn cmd_generate(cfg: &ScenarioConfig, out: &Path) -> CliResult<Dataset> {
    create_dir(out)?;
    let d = generate_dataset(cfg)?;
    d.write(&out.join(DATASET_FILE))?;
    let audit = audit_correlation(&d)?;
    let json = serde_json::to_string_pretty(&audit).map_err(Error::from)?;
    write_text(&out.join(AUDIT_FILE), &json)?;
    eprintln!(
        "generated {} samples; best |rho| {:.3} at {} nm",
        d.samples.len(),
        audit.best_abs,
        audit.best_wavelength
    );
    Ok(d)
}

fn selected(model: Option<ModelId>) -> Vec<ModelId> {
    model.map_or_else(|| ModelId::ALL.to_vec(), |m| vec![m])
}

/// Trains the requested models, one thread per model.
pub fn cmd_train(d: &Dataset, ids: &[ModelId], out: &Path) -> CliResult<()> {
    create_dir(&out.join("models"))?;
    let results: Vec<(ModelId, nirbench_core::Result<_>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .iter()
            .map(|&id| (id, scope.spawn(move || train_model(d, id))))
            .collect();
        handles
            .into_iter()
            .map(|(id, h)| (id, h.join().expect("training thread panicked")))
            .collect()
    });
    for (id, result) in results {
        let trained = result?;
        trained.stored.write(&model_path(out, id))?;
        let hist = history_path(out, id);
        match &trained.history {
            Some(rows) => write_history_csv(rows, &hist)?,
            None if hist.exists() => std::fs::remove_file(&hist).map_err(|e| CliError::io(&hist, e))?,
            None => {}
        }
        eprintln!("trained {id} ({} parameters)", trained.stored.param_count());
    }
    Ok(())
}

/// Evaluates every requested model that has an artifact; writes per-model reports and the
/// combined benchmark table.
pub fn cmd_eval(d: &Dataset, ids: &[ModelId], out: &Path, timing: bool) -> CliResult<Vec<ModelReport>> {
    create_dir(&out.join("reports"))?;
    let mut evaluated = Vec::new();
    for &id in ids {
        let path = model_path(out, id);
        if !path.is_file() {
            if ids.len() == 1 {
                return Err(CliError::Data(format!(
                    "no trained artifact at {}; run `nirbench train --model {id}`",
                    path.display()
                )));
            }
            continue;
        }
        let stored = StoredModel::read(&path)?;
        let eval = evaluate(&stored, d, timing)?;
        let json = eval.report.to_json()?;
        write_text(&report_path(out, id), &json)?;
        write_predictions_csv(&eval.reference, &eval.prediction, &predictions_path(out, id))?;
        evaluated.push(id);
    }
    if evaluated.is_empty() {
        return Err(CliError::Data("no trained models found; run `nirbench train` first".into()));
    }
    // the table covers every model with a report on disk, in canonical order
    let reports = read_reports(out)?;
    write_benchmark_csv(&reports, &out.join(BENCHMARK_FILE))?;
    for r in &reports {
        eprintln!(
            "{:<22} RMSE {:>7.2}  MARD {:>6.2}%  Clarke A {:>6.2}%",
            r.model, r.rmse, r.mard, r.clarke_zone_pct[0]
        );
    }
    Ok(reports)
}

/// Reports present under `out`, in canonical model order.
pub fn read_reports(out: &Path) -> CliResult<Vec<ModelReport>> {
    let mut reports = Vec::new();
    for id in ModelId::ALL {
        let path = report_path(out, id);
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            reports.push(ModelReport::from_json(&text)?);
        }
    }
    Ok(reports)
}

/// Renders per-model diagnostics and the radar chart into `<out>/plots`.
pub fn cmd_report(out: &Path) -> CliResult<Vec<PathBuf>> {
    let reports = read_reports(out)?;
    if reports.is_empty() {
        return Err(CliError::Data(format!(
            "no reports under {}; run `nirbench eval` first",
            out.join("reports").display()
        )));
    }
    let dir = out.join("plots");
    create_dir(&dir)?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> CliResult<()> {
        let path = dir.join(name);
        write_text(&path, &svg)?;
        written.push(path);
        Ok(())
    };
    for report in &reports {
        let id: ModelId = report.model.parse()?;
        let (reference, prediction) = read_predictions_csv(&predictions_path(out, id))?;
        emit(format!("{id}_clarke.svg"), plots::clarke_svg(&report.model, &reference, &prediction))?;
        emit(
            format!("{id}_bland_altman.svg"),
            plots::bland_altman_svg(&report.model, &reference, &prediction, report),
        )?;
        emit(
            format!("{id}_linearity.svg"),
            plots::linearity_svg(&report.model, &reference, &prediction, report),
        )?;
        let hist = history_path(out, id);
        if hist.is_file() {
            let rows = read_history_csv(&hist)?;
            if !rows.is_empty() {
                emit(format!("{id}_loss.svg"), plots::loss_svg(&report.model, &rows))?;
            }
        }
    }
    emit("radar.svg".into(), plots::radar_svg(&reports))?;
    Ok(written)
}

pub fn feature_list(cfg: &ScenarioConfig) -> Vec<String> {
    match <[u32; 4]>::try_from(cfg.wavelengths.as_slice()) {
        Ok(wl) => feature_names_for(&wl),
        Err(_) => feature_names().to_vec(),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate => "generate",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Report => "report",
        Command::Bench(_) => "bench",
        Command::Features { .. } => "features",
    }
}

fn finish(out: &Path, command: &str, config_hash: Option<String>, started: u64) -> CliResult<()> {
    RunManifest::collect(out, command, config_hash, started)?.write(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let started = unix_now();
    let out = cli.out.clone();
    let name = command_name(&cli.command);
    match &cli.command {
        Command::Generate => {
            let cfg = load_config(&cli)?;
            let d = cmd_generate(&cfg, &out)?;
            finish(&out, name, Some(d.config_hash), started)
        }
        Command::Train(args) => {
            let d = read_dataset(&dataset_path(&out, &args.dataset))?;
            cmd_train(&d, &selected(args.model), &out)?;
            finish(&out, name, Some(d.config_hash), started)
        }
        Command::Eval(args) => {
            let d = read_dataset(&dataset_path(&out, &args.target.dataset))?;
            cmd_eval(&d, &selected(args.target.model), &out, args.timing)?;
            finish(&out, name, Some(d.config_hash), started)
        }
        Command::Report => {
            cmd_report(&out)?;
            finish(&out, name, None, started)
        }
        Command::Bench(args) => {
            let cfg = load_config(&cli)?;
            let d = cmd_generate(&cfg, &out)?;
            cmd_train(&d, &ModelId::ALL, &out)?;
            cmd_eval(&d, &ModelId::ALL, &out, args.timing)?;
            cmd_report(&out)?;
            finish(&out, name, Some(d.config_hash), started)
        }
        Command::Features { list } => {
            if !list {
                return Err(CliError::Usage("use `nirbench features --list`".into()));
            }
            let cfg = load_config(&cli)?;
            for n in feature_list(&cfg) {
                println!("{n}");
            }
            Ok(())
        }
    }
}
