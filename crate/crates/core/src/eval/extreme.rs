use serde::{Deserialize, Serialize};

use super::metrics::mae;
use crate::error::{Error, Result};

/// Integer cut points `round(mean + k * std)` for `k = 1, 2, 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeThresholds {
    pub mean: f64,
    pub std: f64,
    pub t1: i64,
    pub t2: i64,
    pub t3: i64,
}

impl ExtremeThresholds {
    pub fn from_moments(mean: f64, std: f64) -> Result<ExtremeThresholds> {
        let t = |k: f64| (mean + k * std).round() as i64;
        let (t1, t2, t3) = (t(1.0), t(2.0), t(3.0));
        if !(mean.is_finite() && std.is_finite()) || t1 >= t2 || t2 >= t3 {
            return Err(Error::Degenerate(format!(
                "thresholds {t1}/{t2}/{t3} from mean {mean}, std {std} are not strictly increasing"
            )));
        }
        Ok(ExtremeThresholds { mean, std, t1, t2, t3 })
    }

    pub fn as_array(&self) -> [i64; 3] {
        [self.t1, self.t2, self.t3]
    }
}

/// Thresholds from the population mean and standard deviation of `series`.
pub fn compute_thresholds(series: &[f64]) -> Result<ExtremeThresholds> {
    if series.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    ExtremeThresholds::from_moments(mean, std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeCategory {
    Normal,
    Extreme,
    VeryExtreme,
    HighlyExtreme,
}

impl ExtremeCategory {
    pub const ALL: [ExtremeCategory; 4] = [
        ExtremeCategory::Normal,
        ExtremeCategory::Extreme,
        ExtremeCategory::VeryExtreme,
        ExtremeCategory::HighlyExtreme,
    ];
}

pub fn classify_extreme(value: f64, th: &ExtremeThresholds) -> ExtremeCategory {
    if value <= th.t1 as f64 {
        ExtremeCategory::Normal
    } else if value <= th.t2 as f64 {
        ExtremeCategory::Extreme
    } else if value <= th.t3 as f64 {
        ExtremeCategory::VeryExtreme
    } else {
        ExtremeCategory::HighlyExtreme
    }
}

/// MAE over the points whose actual value exceeds `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMae {
    pub threshold: i64,
    pub n: usize,
    /// `None` for an empty slice.
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMae {
    pub category: ExtremeCategory,
    pub n: usize,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub thresholds: ExtremeThresholds,
    /// `> t1`, `> t2`, `> t3`; each slice contains the next.
    pub cumulative: Vec<SliceMae>,
    /// Disjoint category bands covering every point.
    pub bands: Vec<BandMae>,
}

pub fn extreme_slice_mae(y: &[f64], yhat: &[f64], th: &ExtremeThresholds) -> Result<SliceReport> {
    if y.len() != yhat.len() {
        return Err(Error::shape(format!("{} actuals vs {} predictions", y.len(), yhat.len())));
    }
    let subset = |keep: &dyn Fn(f64) -> bool| {
        let (a, p): (Vec<f64>, Vec<f64>) = y
            .iter()
            .zip(yhat)
            .filter(|(&a, _)| keep(a))
            .map(|(&a, &p)| (a, p))
            .unzip();
        (a.len(), mae(&a, &p))
    };
    let cumulative = th
        .as_array()
        .iter()
        .map(|&t| {
            let (n, m) = subset(&|a| a > t as f64);
            SliceMae { threshold: t, n, mae: m }
        })
        .collect();
    let bands = ExtremeCategory::ALL
        .iter()
        .map(|&c| {
            let (n, m) = subset(&|a| classify_extreme(a, th) == c);
            BandMae { category: c, n, mae: m }
        })
        .collect();
    Ok(SliceReport { thresholds: *th, cumulative, bands })
}
