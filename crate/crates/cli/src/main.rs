//! `boardcast`: synthetic data, features, training, tuning and evaluation
//! for hourly ED boarding forecasts.
//!
//! Each subcommand writes its artifacts and a `manifest.json` into the
//! directory given by `--out`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use boardcast::dataset::{FeatureManifest, SplitFractions, VARIANT_IDS};
use boardcast::eval::{export_decomposition, write_decomposition_csv, write_predictions_csv};
use boardcast::ingest::SourceFiles;
use boardcast::nbeatsx::{Checkpoint, NBeatsXConfig};
use boardcast::pipeline::{
    create, digests, featurize, fit, first_full_day, forecast, horizon_metrics, prepare, prepare_for_checkpoint,
    run_pipeline, score, write_json, DataSource, FeaturizeOptions, PipelineConfig, RunManifest, Segment,
};
use boardcast::synth::{generate, ScenarioConfig, GROUND_TRUTH_FILE};
use boardcast::table::HourlyTable;
use boardcast::tuning::{grid_search, write_results, GridSpec};
use boardcast::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "boardcast", version, about = "Forecast ED boarding counts with N-BEATSx")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic source files and their ground truth.
    Synth(SynthArgs),
    /// Parse and clean sources into the hourly table.
    Featurize(FeaturizeArgs),
    /// Build a dataset variant and report its split and windows.
    Build(BuildArgs),
    /// Train a model and save its checkpoint.
    Train(TrainArgs),
    /// Train every configuration of a grid and rank them.
    Gridsearch(GridArgs),
    /// Score a checkpoint on the test segment.
    Evaluate(CheckpointArgs),
    /// Export the trend/seasonality/exogenous split of one day.
    Decompose(DecomposeArgs),
    /// Run every stage end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// `default` or a scenario JSON file.
    #[arg(long, default_value = "default")]
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long, env = "BOARDCAST_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Directory holding the six source files.
    #[arg(long)]
    data: PathBuf,
    /// Keep the early-pandemic months in the table.
    #[arg(long)]
    keep_covid: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct TableArgs {
    /// Hourly table written by `featurize`.
    #[arg(long)]
    hourly: PathBuf,
    /// `DS1`..`DS5` or a feature manifest file.
    #[arg(long, default_value = "DS3")]
    variant: String,
}

#[derive(Args)]
struct ModelArgs {
    /// Model configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, env = "BOARDCAST_SEED", default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn resolve(&self) -> Result<NBeatsXConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).map_err(Error::from)?
            }
            None => NBeatsXConfig::default(),
        };
        if let Some(v) = self.lookback {
            c.lookback = v;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = self.epochs {
            c.max_epochs = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.dropout {
            c.dropout = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        c.seed = self.seed;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long, default_value_t = 12)]
    lookback: usize,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    table: TableArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Grid JSON; default is a small illustrative grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    hourly: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Variant override; default is the one stored in the checkpoint.
    #[arg(long)]
    variant: Option<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    checkpoint: CheckpointArgs,
    /// Day to export (YYYY-MM-DD); default is the first full test day.
    #[arg(long)]
    day: Option<NaiveDate>,
    /// Forecast step whose decomposition is exported; default is the horizon.
    #[arg(long)]
    step: Option<usize>,
}

#[derive(Args)]
struct PipelineArgs {
    /// `default` or a scenario JSON file; ignored with `--data`.
    #[arg(long, default_value = "default")]
    scenario: String,
    /// Seed for the synthetic data; default is the scenario seed.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Use real source files from this directory instead of a scenario.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "DS3")]
    variant: String,
    #[arg(long)]
    keep_covid: bool,
    /// Day for the decomposition export.
    #[arg(long)]
    day: Option<NaiveDate>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Diverged { .. } | Error::NonFinite { .. }) => EXIT_DIVERGED,
        Some(Error::InvalidInput(_)) => EXIT_USAGE,
        Some(err) if err.is_data_error() => EXIT_DATA,
        Some(_) => EXIT_OTHER,
        None if e.downcast_ref::<UsageError>().is_some() => EXIT_USAGE,
        None => EXIT_OTHER,
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("no such file: {}", path.display())).into());
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Build(a) => build(a),
        Command::Train(a) => train_cmd(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Decompose(a) => decompose(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

/// Writes the manifest of a run directory.
fn finish<C: serde::Serialize>(command: &str, seed: u64, config: &C, out: &Path, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let mut m = RunManifest::new(command, seed, config)?;
    m.inputs = digests(inputs, out)?;
    m.outputs = digests(outputs, out)?;
    m.write(&out.join("manifest.json"))?;
    Ok(())
}

fn scenario(name: &str) -> Result<ScenarioConfig> {
    if name != "default" {
        require_file(Path::new(name))?;
    }
    Ok(ScenarioConfig::resolve(name)?)
}

fn read_table(path: &Path) -> Result<HourlyTable> {
    require_file(path)?;
    let f = std::fs::File::open(path)?;
    Ok(HourlyTable::read_csv(std::io::BufReader::new(f))?)
}

fn variant_manifest(variant: &str, inputs: &mut Vec<PathBuf>) -> Result<FeatureManifest> {
    if !VARIANT_IDS.iter().any(|v| v.eq_ignore_ascii_case(variant)) {
        require_file(Path::new(variant))?;
        inputs.push(PathBuf::from(variant));
    }
    Ok(FeatureManifest::resolve(variant)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let s = scenario(&a.scenario)?;
    let seed = a.seed.unwrap_or(s.seed);
    let out = &a.out.out;
    let data = generate(&s, seed)?;
    let files = data.write_sources(out)?;
    let truth = out.join(GROUND_TRUTH_FILE);
    data.write_ground_truth(&truth)?;
    let injected = out.join("injected.json");
    write_json(&injected, &data.injected)?;
    let mut outputs: Vec<PathBuf> = files.all().iter().map(|p| p.to_path_buf()).collect();
    outputs.extend([truth, injected]);
    finish("synth", seed, &s, out, &[], &outputs)?;
    println!("{} visits, {} stays, {} hours -> {}", data.visits.len(), data.stays.len(), data.ground_truth.len(), out.display());
    Ok(())
}

fn featurize_cmd(a: FeaturizeArgs) -> Result<()> {
    let files = SourceFiles::in_dir(&a.data);
    for p in files.all() {
        require_file(p)?;
    }
    let options = FeaturizeOptions { exclude_covid: !a.keep_covid, ..FeaturizeOptions::default() };
    let (table, report) = featurize(&files, &options)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let hourly = out.join("hourly.csv");
    table.write_csv(create(&hourly)?)?;
    let rep = out.join("featurize_report.json");
    write_json(&rep, &report)?;
    let inputs: Vec<PathBuf> = files.all().iter().map(|p| p.to_path_buf()).collect();
    finish("featurize", 0, &options, out, &inputs, &[hourly, rep])?;
    let c = &report.cleaning;
    println!(
        "{} hours ({} excluded); dropped {} waiting, {} stuck in treatment, {} boarding; imputed {} ESI",
        report.hours, report.excluded_hours, c.waiting_excluded, c.stuck_treatment_excluded, c.boarding_excluded, c.esi_imputed
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct BuildSummary {
    variant: String,
    rows: usize,
    warmup_rows: usize,
    history_features: Vec<String>,
    future_features: Vec<String>,
    train_rows: usize,
    val_rows: usize,
    test_rows: usize,
    train_windows: usize,
    val_windows: usize,
    test_windows: usize,
    thresholds: [i64; 3],
}

fn build(a: BuildArgs) -> Result<()> {
    let mut inputs = vec![a.table.hourly.clone()];
    let table = read_table(&a.table.hourly)?;
    let manifest = variant_manifest(&a.table.variant, &mut inputs)?;
    let p = prepare(&table, &manifest, SplitFractions::default(), a.lookback, a.horizon, None)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let variant = out.join("variant.csv");
    p.variant.tabular.write_csv(create(&variant)?)?;
    let summary = BuildSummary {
        variant: p.variant.id.clone(),
        rows: p.variant.sequence.n_rows(),
        warmup_rows: p.variant.warmup_rows,
        history_features: p.layout.history_features.clone(),
        future_features: p.layout.future_features.clone(),
        train_rows: p.train.n_rows(),
        val_rows: p.val.n_rows(),
        test_rows: p.test.n_rows(),
        train_windows: p.train_windows.len(),
        val_windows: p.val_windows.len(),
        test_windows: p.test_windows.len(),
        thresholds: p.thresholds.as_array(),
    };
    let sum = out.join("build.json");
    write_json(&sum, &summary)?;
    let scaler = out.join("scaler.json");
    write_json(&scaler, &p.scaler)?;
    let config = serde_json::json!({ "variant": a.table.variant, "lookback": a.lookback, "horizon": a.horizon });
    finish("build", 0, &config, out, &inputs, &[variant, sum, scaler])?;
    println!(
        "{}: {} rows, windows {}/{}/{}",
        summary.variant, summary.rows, summary.train_windows, summary.val_windows, summary.test_windows
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let model = a.model.resolve()?;
    let mut inputs = vec![a.table.hourly.clone()];
    inputs.extend(a.model.config.iter().cloned());
    let table = read_table(&a.table.hourly)?;
    let manifest = variant_manifest(&a.table.variant, &mut inputs)?;
    let p = prepare(&table, &manifest, SplitFractions::default(), model.lookback, model.horizon, None)?;
    let (trained, history) = fit(&p, &model)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let hist = out.join("history.csv");
    history.write_csv(create(&hist)?)?;
    let ckpt = out.join("checkpoint.json");
    p.checkpoint(&trained).save(&ckpt)?;
    let val = horizon_metrics(&forecast(&trained, &p, Segment::Validation)?)?;
    let metrics = out.join("validation.json");
    write_json(&metrics, &val)?;
    let config = serde_json::json!({ "variant": a.table.variant, "model": model });
    finish("train", model.seed, &config, out, &inputs, &[hist, ckpt, metrics])?;
    println!("best epoch {} of {}; validation MAE {:.3} at t+{}", history.best_epoch, history.epochs.len(), val.mae, model.horizon);
    Ok(())
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let base = a.model.resolve()?;
    let mut inputs = vec![a.table.hourly.clone()];
    let grid = match &a.grid {
        Some(p) => {
            require_file(p)?;
            inputs.push(p.clone());
            GridSpec::load(p)?
        }
        None => GridSpec::default(),
    };
    let table = read_table(&a.table.hourly)?;
    let manifest = variant_manifest(&a.table.variant, &mut inputs)?;
    let trials = grid_search(&grid, &base, &table, &manifest, SplitFractions::default(), base.seed)?;
    let out = &a.out.out;
    let outputs = write_results(&trials, out)?;
    let config = serde_json::json!({ "variant": a.table.variant, "base": base, "grid": grid });
    finish("gridsearch", base.seed, &config, out, &inputs, &outputs)?;
    let aborted = trials.iter().filter(|t| t.aborted.is_some()).count();
    match trials.first().and_then(|t| t.validation.as_ref().map(|m| (t, m))) {
        Some((t, m)) => println!("{} trials ({} aborted); best trial {} with validation MAE {:.3}", trials.len(), aborted, t.index, m.mae),
        None => println!("{} trials, all aborted", trials.len()),
    }
    Ok(())
}

fn load_checkpoint(a: &CheckpointArgs, inputs: &mut Vec<PathBuf>) -> Result<(boardcast::pipeline::Prepared, boardcast::Model)> {
    require_file(&a.checkpoint)?;
    inputs.extend([a.hourly.clone(), a.checkpoint.clone()]);
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let variant = match (&a.variant, &ckpt.variant) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => v.clone(),
        (None, None) => bail!(UsageError("checkpoint names no variant; pass --variant".into())),
    };
    let table = read_table(&a.hourly)?;
    let manifest = variant_manifest(&variant, inputs)?;
    let p = prepare_for_checkpoint(&table, &ckpt, &manifest, SplitFractions::default())?;
    Ok((p, ckpt.to_model()?))
}

fn evaluate_cmd(a: CheckpointArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let (p, model) = load_checkpoint(&a, &mut inputs)?;
    let test = forecast(&model, &p, Segment::Test)?;
    let report = score(&p, Segment::Test, &test)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let preds = out.join("predictions.csv");
    write_predictions_csv(&test, create(&preds)?)?;
    let rep = out.join("evaluation.json");
    write_json(&rep, &report)?;
    let config = serde_json::json!({ "variant": p.variant.id, "segment": Segment::Test });
    finish("evaluate", model.config.seed, &config, out, &inputs, &[preds, rep])?;
    let m = &report.at_horizon;
    println!("t+{}: MAE {:.3} RMSE {:.3} R2 {}", report.horizon, m.mae, m.rmse, m.r2.map(|r| format!("{r:.3}")).unwrap_or("-".into()));
    for s in &report.slices.cumulative {
        println!("  > {:>3}: n {:>5} MAE {}", s.threshold, s.n, s.mae.map(|v| format!("{v:.3}")).unwrap_or("-".into()));
    }
    Ok(())
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let (p, model) = load_checkpoint(&a.checkpoint, &mut inputs)?;
    let test = forecast(&model, &p, Segment::Test)?;
    let step = a.step.unwrap_or(model.config.horizon);
    if step == 0 || step > model.config.horizon {
        bail!(UsageError(format!("--step must lie in 1..={}", model.config.horizon)));
    }
    let day = match a.day {
        Some(d) => d,
        None => first_full_day(&test, step).ok_or_else(|| Error::Degenerate("no full test day to decompose".into()))?,
    };
    let rows = export_decomposition(&test, day, step)?;
    let out = &a.checkpoint.out.out;
    std::fs::create_dir_all(out)?;
    let path = out.join("decomposition.csv");
    write_decomposition_csv(&rows, create(&path)?)?;
    let config = serde_json::json!({ "variant": p.variant.id, "day": day, "step": step });
    finish("decompose", model.config.seed, &config, out, &inputs, &[path])?;
    println!("{} hours of {day} -> {}", rows.len(), out.join("decomposition.csv").display());
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let model = a.model.resolve()?;
    let source = match &a.data {
        Some(dir) => {
            let files = SourceFiles::in_dir(dir);
            for p in files.all() {
                require_file(p)?;
            }
            DataSource::Files(files)
        }
        None => {
            let s = scenario(&a.scenario)?;
            let seed = a.data_seed.unwrap_or(s.seed);
            DataSource::Scenario { scenario: s, seed }
        }
    };
    if !VARIANT_IDS.iter().any(|v| v.eq_ignore_ascii_case(&a.variant)) {
        require_file(Path::new(&a.variant))?;
    }
    let config = PipelineConfig {
        source,
        variant: a.variant.clone(),
        model,
        split: SplitFractions::default(),
        featurize: FeaturizeOptions { exclude_covid: !a.keep_covid, ..FeaturizeOptions::default() },
        decompose_day: a.day,
    };
    let outcome = run_pipeline(&config, &a.out.out)?;
    let r = &outcome.report;
    let m = &r.test.at_horizon;
    println!(
        "{} seed {}: test t+{} MAE {:.3} RMSE {:.3} R2 {}",
        r.variant,
        r.seed,
        r.test.horizon,
        m.mae,
        m.rmse,
        m.r2.map(|v| format!("{v:.3}")).unwrap_or("-".into())
    );
    for b in &r.test.baselines {
        println!("  {:<16} MAE {:.3}", b.kind.as_str(), b.metrics.mae);
    }
    Ok(())
}
