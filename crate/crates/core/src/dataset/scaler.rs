use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// `(x - mean) / std`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { mean: 0.0, std: 1.0 };

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// False for indicator columns. Columns constant on the training rows
    /// are only centered (`std` is 1).
    pub scaled: bool,
}

/// Per-column standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<ColumnStat>,
    pub target: Standardizer,
}

fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_degenerate(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(1.0))
}

impl Scaler {
    pub fn fit(train: &FeatureMatrix) -> Result<Scaler> {
        if train.n_rows() == 0 {
            return Err(Error::invalid("cannot fit a scaler on zero rows"));
        }
        let columns = train
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let (mean, std) = population_stats(train.data.column(j).iter().copied());
                ColumnStat {
                    name: c.name.clone(),
                    mean,
                    std: if is_degenerate(mean, std) { 1.0 } else { std },
                    scaled: !c.kind.is_binary(),
                }
            })
            .collect();
        let (mean, std) = population_stats(train.target_raw.iter().copied());
        let target = if is_degenerate(mean, std) {
            Standardizer { mean, std: 1.0 }
        } else {
            Standardizer { mean, std }
        };
        Ok(Scaler { columns, target })
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.columns.len() != self.columns.len()
            || m.columns.iter().zip(&self.columns).any(|(a, b)| a.name != b.name)
        {
            return Err(Error::shape("matrix columns do not match the fitted scaler"));
        }
        let mut out = m.clone();
        for (j, stat) in self.columns.iter().enumerate() {
            if stat.scaled {
                out.data
                    .column_mut(j)
                    .mapv_inplace(|v| (v - stat.mean) / stat.std);
            }
        }
        out.target = m.target_raw.iter().map(|&y| self.target.scale(y)).collect();
        Ok(out)
    }

    pub fn invert_target(&self, z: f64) -> f64 {
        self.target.invert(z)
    }
}
