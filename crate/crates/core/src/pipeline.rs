//! End-to-end orchestration: source files to hourly table, dataset
//! variant, trained model, evaluation report and plot-ready exports.
//!
//! Every artifact of a run is written under one directory together with a
//! `manifest.json` that records the configuration, the seed and the SHA-256
//! digest of each input and output file. No wall-clock time is recorded, so
//! two runs with the same inputs produce identical files.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    build_variant, chronological_split, make_windows, FeatureManifest, FeatureMatrix, Scaler, SplitFractions,
    SupervisedWindow, Variant, WindowLayout,
};
use crate::error::{Error, Result};
use crate::eval::{
    compute_thresholds, evaluate, export_decomposition, regression_metrics, step_values, write_decomposition_csv,
    write_predictions_csv, DecompositionRow, EvaluationReport, ExtremeThresholds, MetricsReport,
};
use crate::flow::{assemble_hourly_records, compute_flow_metrics};
use crate::ingest::{
    build_hour_index, parse_calendar, parse_ed_tracking, parse_inpatient, parse_weather, truncate_to_hour,
    RejectReason, SourceFiles,
};
use crate::nbeatsx::{predict, train, Checkpoint, Forecast, History, NBeatsXConfig};
use crate::preprocess::{clean_visits, covid_window, exclude_window, impute_esi, CleaningReport, CleaningRules};
use crate::synth::{generate, ScenarioConfig, GROUND_TRUTH_FILE};
use crate::table::HourlyTable;
use crate::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeOptions {
    pub rules: CleaningRules,
    /// Drop the early-pandemic window from the hourly table.
    pub exclude_covid: bool,
    /// Timeline bounds; default is the span of the weather feed.
    #[serde(default)]
    pub start: Option<NaiveDateTime>,
    #[serde(default)]
    pub end: Option<NaiveDateTime>,
}

impl Default for FeaturizeOptions {
    fn default() -> Self {
        FeaturizeOptions {
            rules: CleaningRules::default(),
            exclude_covid: true,
            start: None,
            end: None,
        }
    }
}

/// Rows each source parser turned down, by reason.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectSummary {
    pub ed_tracking: Vec<(RejectReason, usize)>,
    pub inpatient: Vec<(RejectReason, usize)>,
    pub weather: Vec<(RejectReason, usize)>,
    pub calendar: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeReport {
    pub hours: usize,
    pub excluded_hours: usize,
    pub rejects: RejectSummary,
    pub cleaning: CleaningReport,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))
}

/// Parses the sources, cleans the visits and builds the hourly table.
pub fn featurize(files: &SourceFiles, options: &FeaturizeOptions) -> Result<(HourlyTable, FeaturizeReport)> {
    let ed = parse_ed_tracking(open(&files.ed_tracking)?)?;
    let ip = parse_inpatient(open(&files.inpatient)?)?;
    let mut weather = parse_weather(open(&files.weather)?)?;
    let (calendar, cal_rejects) =
        parse_calendar(open(&files.holidays)?, open(&files.game1)?, open(&files.game2)?)?;
    weather.records.sort_by_key(|w| w.hour);

    let rejects = RejectSummary {
        ed_tracking: ed.rejection_counts().into_iter().collect(),
        inpatient: ip.rejection_counts().into_iter().collect(),
        weather: weather.rejection_counts().into_iter().collect(),
        calendar: cal_rejects.holidays.len() + cal_rejects.game1.len() + cal_rejects.game2.len(),
    };

    let (mut visits, mut cleaning) = clean_visits(ed.records, &options.rules);
    impute_esi(&mut visits, &mut cleaning);

    let first = weather.records.first().map(|w| truncate_to_hour(w.hour));
    let last = weather.records.last().map(|w| truncate_to_hour(w.hour));
    let start = options
        .start
        .or(first)
        .ok_or_else(|| Error::Degenerate("no weather observations to span the timeline".into()))?;
    let end = options.end.or(last).expect("weather is non-empty");
    let index = build_hour_index(start, end)?;
    let flow = compute_flow_metrics(&visits, &ip.records, &index)?;
    let mut table = assemble_hourly_records(&flow, &weather.records, &calendar, &index)?;
    let all = table.len();
    if options.exclude_covid {
        let (from, to) = covid_window();
        table = exclude_window(&table, from, to);
    }
    let report = FeaturizeReport {
        hours: table.len(),
        excluded_hours: all - table.len(),
        rejects,
        cleaning,
    };
    Ok((table, report))
}

/// Which chronological segment to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Train,
    Validation,
    Test,
}

/// A variant split, scaled and cut into windows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub variant: Variant,
    pub scaler: Scaler,
    pub layout: WindowLayout,
    /// Scaled segments, in model units.
    pub train: FeatureMatrix,
    pub val: FeatureMatrix,
    pub test: FeatureMatrix,
    pub train_windows: Vec<SupervisedWindow>,
    pub val_windows: Vec<SupervisedWindow>,
    pub test_windows: Vec<SupervisedWindow>,
    /// From the whole target series of the variant.
    pub thresholds: ExtremeThresholds,
}

impl Prepared {
    pub fn segment(&self, s: Segment) -> (&FeatureMatrix, &[SupervisedWindow]) {
        match s {
            Segment::Train => (&self.train, &self.train_windows),
            Segment::Validation => (&self.val, &self.val_windows),
            Segment::Test => (&self.test, &self.test_windows),
        }
    }

    /// Tags a trained model with what it needs to be used again.
    pub fn checkpoint(&self, model: &Model) -> Checkpoint {
        let mut c = Checkpoint::from_model(model);
        c.layout = Some(self.layout.clone());
        c.scaler = Some(self.scaler.clone());
        c.variant = Some(self.variant.id.clone());
        c
    }
}

/// Builds the variant, splits it 70/15/15 (by default), fits the scaler on
/// the training rows unless one is given, and cuts windows inside each
/// segment.
pub fn prepare(
    table: &HourlyTable,
    manifest: &FeatureManifest,
    split: SplitFractions,
    lookback: usize,
    horizon: usize,
    scaler: Option<&Scaler>,
) -> Result<Prepared> {
    let variant = build_variant(table, manifest)?;
    let thresholds = compute_thresholds(&variant.sequence.target_raw)?;
    let (train, val, test) = chronological_split(&variant.sequence, split)?;
    let scaler = match scaler {
        Some(s) => s.clone(),
        None => Scaler::fit(&train)?,
    };
    let (train, val, test) = (scaler.apply(&train)?, scaler.apply(&val)?, scaler.apply(&test)?);
    let windows = |m: &FeatureMatrix, name: &str| {
        let w = make_windows(m, lookback, horizon);
        if w.is_empty() {
            Err(Error::Degenerate(format!("the {name} segment yields no windows")))
        } else {
            Ok(w)
        }
    };
    Ok(Prepared {
        layout: WindowLayout::for_matrix(&variant.sequence, lookback, horizon),
        train_windows: windows(&train, "training")?,
        val_windows: windows(&val, "validation")?,
        test_windows: windows(&test, "test")?,
        variant,
        scaler,
        train,
        val,
        test,
        thresholds,
    })
}

/// Rebuilds the evaluation data a checkpoint was trained for.
pub fn prepare_for_checkpoint(table: &HourlyTable, checkpoint: &Checkpoint, manifest: &FeatureManifest, split: SplitFractions) -> Result<Prepared> {
    let scaler = checkpoint
        .scaler
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("checkpoint carries no scaler".into()))?;
    let p = prepare(table, manifest, split, checkpoint.config.lookback, checkpoint.config.horizon, Some(scaler))?;
    if let Some(layout) = &checkpoint.layout {
        if *layout != p.layout {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects features {:?}, variant `{}` provides {:?}",
                layout.history_features, p.variant.id, p.layout.history_features
            )));
        }
    }
    Ok(p)
}

pub fn fit(prepared: &Prepared, config: &NBeatsXConfig) -> Result<(Model, History)> {
    train(config, &prepared.train_windows, &prepared.val_windows)
}

pub fn forecast(model: &Model, prepared: &Prepared, segment: Segment) -> Result<Vec<Forecast>> {
    predict(model, prepared.segment(segment).1, prepared.scaler.target)
}

/// Scores `forecasts` of `segment` against the model and the baselines.
pub fn score(prepared: &Prepared, segment: Segment, forecasts: &[Forecast]) -> Result<EvaluationReport> {
    let m = prepared.segment(segment).0;
    evaluate(forecasts, (&m.timestamps, &m.target_raw), &prepared.thresholds)
}

/// Metrics at the last horizon step.
pub fn horizon_metrics(forecasts: &[Forecast]) -> Result<MetricsReport> {
    let h = forecasts
        .first()
        .ok_or_else(|| Error::invalid("no forecasts"))?
        .actual
        .len();
    let (y, p) = step_values(forecasts, h);
    regression_metrics(&y, &p)
}

/// First day whose 24 hours all have a `step`-ahead forecast.
pub fn first_full_day(forecasts: &[Forecast], step: usize) -> Option<NaiveDate> {
    let mut days: Vec<NaiveDate> = forecasts.iter().map(|f| f.timestamps[step - 1].date()).collect();
    days.dedup();
    days.into_iter().find(|&d| export_decomposition(forecasts, d, step).is_ok())
}

/// Where the data of a pipeline run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated into `<out>/data` from a scenario.
    Scenario { scenario: ScenarioConfig, seed: u64 },
    Files(SourceFiles),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source: DataSource,
    /// `DS1`..`DS5` or a manifest path.
    pub variant: String,
    pub model: NBeatsXConfig,
    pub split: SplitFractions,
    pub featurize: FeaturizeOptions,
    /// Day for the decomposition export; default is the first full test day.
    #[serde(default)]
    pub decompose_day: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Reproduction record written next to the artifacts of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Paths are stored relative to `base` when they lie under it.
pub fn digests(paths: &[PathBuf], base: &Path) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let shown = p.strip_prefix(base).unwrap_or(p);
            Ok(FileDigest {
                path: shown.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<RunManifest> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Everything the evaluation report of a run contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub seed: u64,
    pub rows: usize,
    pub warmup_rows: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation: MetricsReport,
    pub test: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: RunReport,
    pub featurize: FeaturizeReport,
    pub manifest: RunManifest,
    pub decomposition: Vec<DecompositionRow>,
}

/// File names inside a run directory.
pub mod artifacts {
    pub const DATA_DIR: &str = "data";
    pub const HOURLY: &str = "hourly.csv";
    pub const FEATURIZE_REPORT: &str = "featurize_report.json";
    pub const VARIANT: &str = "variant.csv";
    pub const HISTORY: &str = "history.csv";
    pub const CHECKPOINT: &str = "checkpoint.json";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const REPORT: &str = "report.json";
    pub const DECOMPOSITION: &str = "decomposition.csv";
    pub const MANIFEST: &str = "manifest.json";
}

/// Runs every stage and writes the artifacts under `out`.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<PipelineOutcome> {
    use artifacts::*;
    std::fs::create_dir_all(out)?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut outputs: Vec<PathBuf> = Vec::new();

    let files = match &config.source {
        DataSource::Scenario { scenario, seed } => {
            let data = generate(scenario, *seed)?;
            let files = data.write_sources(&out.join(DATA_DIR))?;
            let truth = out.join(DATA_DIR).join(GROUND_TRUTH_FILE);
            data.write_ground_truth(&truth)?;
            outputs.extend(files.all().iter().map(|p| p.to_path_buf()));
            outputs.push(truth);
            files
        }
        DataSource::Files(files) => {
            inputs.extend(files.all().iter().map(|p| p.to_path_buf()));
            files.clone()
        }
    };

    let (table, featurize_report) = featurize(&files, &config.featurize)?;
    table.write_csv(create(&out.join(HOURLY))?)?;
    write_json(&out.join(FEATURIZE_REPORT), &featurize_report)?;

    let manifest = FeatureManifest::resolve(&config.variant)?;
    if !crate::dataset::VARIANT_IDS.iter().any(|v| v.eq_ignore_ascii_case(&config.variant)) {
        inputs.push(PathBuf::from(&config.variant));
    }
    let prepared = prepare(&table, &manifest, config.split, config.model.lookback, config.model.horizon, None)?;
    prepared.variant.tabular.write_csv(create(&out.join(VARIANT))?)?;

    let (model, history) = fit(&prepared, &config.model)?;
    history.write_csv(create(&out.join(HISTORY))?)?;
    prepared.checkpoint(&model).save(&out.join(CHECKPOINT))?;

    let val = forecast(&model, &prepared, Segment::Validation)?;
    let test = forecast(&model, &prepared, Segment::Test)?;
    write_predictions_csv(&test, create(&out.join(PREDICTIONS))?)?;
    let evaluation = score(&prepared, Segment::Test, &test)?;

    let step = config.model.horizon;
    let day = match config.decompose_day {
        Some(d) => d,
        None => first_full_day(&test, step)
            .ok_or_else(|| Error::Degenerate("no full test day to decompose".into()))?,
    };
    let decomposition = export_decomposition(&test, day, step)?;
    write_decomposition_csv(&decomposition, create(&out.join(DECOMPOSITION))?)?;

    let report = RunReport {
        variant: prepared.variant.id.clone(),
        seed: config.model.seed,
        rows: prepared.variant.sequence.n_rows(),
        warmup_rows: prepared.variant.warmup_rows,
        train_windows: prepared.train_windows.len(),
        val_windows: prepared.val_windows.len(),
        test_windows: prepared.test_windows.len(),
        best_epoch: history.best_epoch,
        epochs_run: history.epochs.len(),
        validation: horizon_metrics(&val)?,
        test: evaluation,
    };
    write_json(&out.join(REPORT), &report)?;

    for name in [HOURLY, FEATURIZE_REPORT, VARIANT, HISTORY, CHECKPOINT, PREDICTIONS, REPORT, DECOMPOSITION] {
        outputs.push(out.join(name));
    }
    let mut manifest = RunManifest::new("pipeline", config.model.seed, config)?;
    manifest.inputs = digests(&inputs, out)?;
    manifest.outputs = digests(&outputs, out)?;
    manifest.write(&out.join(MANIFEST))?;

    Ok(PipelineOutcome {
        report,
        featurize: featurize_report,
        manifest,
        decomposition,
    })
}
