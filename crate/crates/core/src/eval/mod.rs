//! Regression metrics, extreme-case slices, naive baselines and the
//! per-hour decomposition export.

mod baseline;
mod extreme;
mod metrics;

use std::collections::HashSet;
use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::format_timestamp;
use crate::nbeatsx::Forecast;

pub use baseline::{baseline_forecasts, BaselineForecast, BaselineKind};
pub use extreme::{
    classify_extreme, compute_thresholds, extreme_slice_mae, BandMae, ExtremeCategory, ExtremeThresholds, SliceMae,
    SliceReport,
};
pub use metrics::{mae, regression_metrics, MetricsReport};

/// Actual and predicted values at one horizon step.
pub fn step_values(forecasts: &[Forecast], step: usize) -> (Vec<f64>, Vec<f64>) {
    forecasts.iter().map(|f| (f.actual[step - 1], f.at(step))).unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub kind: BaselineKind,
    /// Metrics at `t + H` over the anchors shared with the model.
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub horizon: usize,
    /// Headline metrics at `t + H`.
    pub at_horizon: MetricsReport,
    /// Metrics for each step `1..=H`.
    pub per_step: Vec<MetricsReport>,
    /// All steps pooled.
    pub all_steps: MetricsReport,
    pub slices: SliceReport,
    /// Model metrics restricted to the anchors every baseline covers.
    pub model_on_common: MetricsReport,
    pub baselines: Vec<BaselineReport>,
}

/// Scores forecasts and compares them with the naive baselines computed on
/// the raw `series` the forecasts were cut from.
pub fn evaluate(
    forecasts: &[Forecast],
    series: (&[NaiveDateTime], &[f64]),
    thresholds: &ExtremeThresholds,
) -> Result<EvaluationReport> {
    let first = forecasts.first().ok_or_else(|| Error::invalid("no forecasts to evaluate"))?;
    let horizon = first.actual.len();
    let per_step = (1..=horizon)
        .map(|h| {
            let (y, p) = step_values(forecasts, h);
            regression_metrics(&y, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    let (y, p) = step_values(forecasts, horizon);
    let pooled_y: Vec<f64> = forecasts.iter().flat_map(|f| f.actual.iter().copied()).collect();
    let pooled_p: Vec<f64> = forecasts.iter().flat_map(|f| f.decomposition.total.iter().copied()).collect();

    let kinds = [BaselineKind::Persistence, BaselineKind::SeasonalNaive24h];
    let runs: Vec<Vec<BaselineForecast>> = kinds
        .iter()
        .map(|&k| baseline_forecasts(series.0, series.1, k, horizon))
        .collect();
    let mut common: HashSet<NaiveDateTime> = forecasts.iter().map(|f| f.anchor).collect();
    for run in &runs {
        let anchors: HashSet<NaiveDateTime> = run.iter().map(|b| b.anchor).collect();
        common.retain(|a| anchors.contains(a));
    }
    let model_common: Vec<&Forecast> = forecasts.iter().filter(|f| common.contains(&f.anchor)).collect();
    let (cy, cp): (Vec<f64>, Vec<f64>) = model_common.iter().map(|f| (f.actual[horizon - 1], f.at(horizon))).unzip();
    let baselines = kinds
        .iter()
        .zip(&runs)
        .map(|(&kind, run)| {
            let (by, bp): (Vec<f64>, Vec<f64>) = run
                .iter()
                .filter(|b| common.contains(&b.anchor))
                .map(|b| (b.actual, b.prediction))
                .unzip();
            Ok(BaselineReport { kind, metrics: regression_metrics(&by, &bp)? })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvaluationReport {
        horizon,
        at_horizon: regression_metrics(&y, &p)?,
        per_step,
        all_steps: regression_metrics(&pooled_y, &pooled_p)?,
        slices: extreme_slice_mae(&y, &p, thresholds)?,
        model_on_common: regression_metrics(&cy, &cp)?,
        baselines,
    })
}

/// One hour of the decomposition export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub timestamp: NaiveDateTime,
    pub hour: u32,
    pub actual: f64,
    pub total: f64,
    pub trend: f64,
    pub seasonality: f64,
    pub exogenous: f64,
    pub trend_centered: f64,
    pub seasonality_centered: f64,
    pub exogenous_centered: f64,
}

/// The 24 forecasts of `day` made `step` hours ahead, with each component
/// also shown relative to its mean over the day.
pub fn export_decomposition(forecasts: &[Forecast], day: NaiveDate, step: usize) -> Result<Vec<DecompositionRow>> {
    let start = day.and_hms_opt(0, 0, 0).expect("midnight exists");
    let mut rows = Vec::with_capacity(24);
    for hour in 0..24 {
        let ts = start + Duration::hours(hour);
        let f = forecasts
            .iter()
            .find(|f| f.timestamps.get(step - 1) == Some(&ts))
            .ok_or_else(|| Error::invalid(format!("no {step}-step forecast covers {}", format_timestamp(ts))))?;
        let d = &f.decomposition;
        let i = step - 1;
        rows.push(DecompositionRow {
            timestamp: ts,
            hour: ts.hour(),
            actual: f.actual[i],
            total: d.total[i],
            trend: d.trend[i],
            seasonality: d.seasonality[i],
            exogenous: d.exogenous[i],
            trend_centered: 0.0,
            seasonality_centered: 0.0,
            exogenous_centered: 0.0,
        });
    }
    let mean = |get: fn(&DecompositionRow) -> f64| rows.iter().map(get).sum::<f64>() / 24.0;
    let (mt, ms, me) = (mean(|r| r.trend), mean(|r| r.seasonality), mean(|r| r.exogenous));
    for r in &mut rows {
        r.trend_centered = r.trend - mt;
        r.seasonality_centered = r.seasonality - ms;
        r.exogenous_centered = r.exogenous - me;
    }
    Ok(rows)
}

pub fn write_decomposition_csv<W: Write>(rows: &[DecompositionRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "timestamp",
        "hour",
        "actual",
        "total",
        "trend",
        "seasonality",
        "exogenous",
        "trend_centered",
        "seasonality_centered",
        "exogenous_centered",
    ])?;
    for r in rows {
        let mut rec = vec![format_timestamp(r.timestamp), r.hour.to_string()];
        rec.extend(
            [
                r.actual,
                r.total,
                r.trend,
                r.seasonality,
                r.exogenous,
                r.trend_centered,
                r.seasonality_centered,
                r.exogenous_centered,
            ]
            .iter()
            .map(|v| format!("{v}")),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `anchor, step, target_time, actual, total, trend, seasonality,
/// exogenous` for every forecast step.
pub fn write_predictions_csv<W: Write>(forecasts: &[Forecast], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["anchor", "step", "target_time", "actual", "total", "trend", "seasonality", "exogenous"])?;
    for f in forecasts {
        let d = &f.decomposition;
        for i in 0..f.actual.len() {
            w.write_record([
                format_timestamp(f.anchor),
                (i + 1).to_string(),
                format_timestamp(f.timestamps[i]),
                format!("{}", f.actual[i]),
                format!("{}", d.total[i]),
                format!("{}", d.trend[i]),
                format!("{}", d.seasonality[i]),
                format!("{}", d.exogenous[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
