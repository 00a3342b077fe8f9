use std::collections::HashMap;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// `yhat(t + H) = y(t)`
    Persistence,
    /// `yhat(t + H) = y(t + H - 24)`
    SeasonalNaive24h,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Persistence => "persistence",
            BaselineKind::SeasonalNaive24h => "seasonal_naive_24h",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineForecast {
    pub anchor: NaiveDateTime,
    pub prediction: f64,
    pub actual: f64,
}

/// Forecasts `horizon` hours ahead from every anchor whose source and
/// target hours are both present. Rows are looked up by timestamp, so gaps
/// simply remove the affected anchors.
pub fn baseline_forecasts(
    timestamps: &[NaiveDateTime],
    values: &[f64],
    kind: BaselineKind,
    horizon: usize,
) -> Vec<BaselineForecast> {
    let at: HashMap<NaiveDateTime, f64> = timestamps.iter().copied().zip(values.iter().copied()).collect();
    let h = Duration::hours(horizon as i64);
    timestamps
        .iter()
        .filter_map(|&anchor| {
            let actual = *at.get(&(anchor + h))?;
            let source = match kind {
                BaselineKind::Persistence => anchor,
                BaselineKind::SeasonalNaive24h => anchor + h - Duration::hours(24),
            };
            let prediction = *at.get(&source)?;
            Some(BaselineForecast { anchor, prediction, actual })
        })
        .collect()
}
