use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the actual values are constant.
    pub r2: Option<f64>,
    pub n: usize,
}

/// MAE, MSE, RMSE and R² of `yhat` against `y`.
pub fn regression_metrics<T: Scalar>(y: &[T], yhat: &[T]) -> Result<MetricsReport> {
    if y.len() != yhat.len() {
        return Err(Error::shape(format!("{} actuals vs {} predictions", y.len(), yhat.len())));
    }
    if y.len() < 2 {
        return Err(Error::invalid("metrics need at least two points"));
    }
    let n = y.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut sum_y = 0.0;
    for (&a, &p) in y.iter().zip(yhat) {
        let e = a.as_f64() - p.as_f64();
        abs += e.abs();
        sq += e * e;
        sum_y += a.as_f64();
    }
    let mean = sum_y / n;
    let sst: f64 = y.iter().map(|&a| (a.as_f64() - mean).powi(2)).sum();
    let mse = sq / n;
    Ok(MetricsReport {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        r2: (sst > 0.0).then(|| 1.0 - sq / sst),
        n: y.len(),
    })
}

/// Mean absolute error, `None` for an empty input.
pub fn mae(y: &[f64], yhat: &[f64]) -> Option<f64> {
    if y.is_empty() || y.len() != yhat.len() {
        return None;
    }
    Some(y.iter().zip(yhat).map(|(a, p)| (a - p).abs()).sum::<f64>() / y.len() as f64)
}
