use chrono::{Duration, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::batch::Batch;
use super::model::NBeatsX;
use super::{ModelDims, NBeatsXConfig};
use crate::dataset::{Standardizer, SupervisedWindow};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum decrease in training loss that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch (dropout active).
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (lowest training loss).
    pub best_epoch: usize,
    pub stop: StopReason,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v}")).unwrap_or_default();
            w.write_record([e.epoch.to_string(), format!("{}", e.train_loss), val])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Layout of the windows the model will consume.
pub fn dims_of(config: &NBeatsXConfig, windows: &[SupervisedWindow]) -> Result<ModelDims> {
    let w = windows.first().ok_or_else(|| Error::invalid("no training windows"))?;
    if w.lookback() != config.lookback || w.horizon() != config.horizon {
        return Err(Error::shape(format!(
            "windows have L={} H={}, config expects L={} H={}",
            w.lookback(),
            w.horizon(),
            config.lookback,
            config.horizon
        )));
    }
    Ok(ModelDims {
        lookback: config.lookback,
        horizon: config.horizon,
        history_features: w.history.ncols() - 1,
        future_features: w.future.ncols(),
    })
}

fn chunked_loss<T: Scalar>(model: &NBeatsX<T>, data: &Batch<T>) -> Result<f64> {
    let n = data.len();
    let mut sum = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let part = data.select(&idx);
        sum += model.loss(&part)?.as_f64() * idx.len() as f64;
    }
    Ok(sum / n as f64)
}

/// Mini-batch training with Adam over shuffled windows.
///
/// Stops after `max_epochs`, or once the training loss has failed to improve
/// by more than [`MIN_IMPROVEMENT`] for more than `patience` consecutive
/// epochs. The returned model carries the weights of the best epoch.
pub fn train<T: Scalar>(
    config: &NBeatsXConfig,
    train: &[SupervisedWindow],
    val: &[SupervisedWindow],
) -> Result<(NBeatsX<T>, History)> {
    config.validate()?;
    let dims = dims_of(config, train)?;
    let data: Batch<T> = Batch::from_windows(train, dims)?;
    let val_data: Option<Batch<T>> = if val.is_empty() {
        None
    } else {
        Some(Batch::from_windows(val, dims)?)
    };

    let mut model: NBeatsX<T> = NBeatsX::new(config.clone(), dims)?;
    let shapes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::<T>::new(AdamConfig::default(), &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        stop: StopReason::MaxEpochs,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_model = model.clone();
    let mut stale = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select(idx);
            let diverged = |detail: String, history: History| Error::Diverged {
                epoch,
                batch: b,
                detail,
                history: Box::new(History { stop: StopReason::Diverged, ..history }),
            };
            let (loss, grads) = match model.loss_and_gradients(&batch, Some(&mut rng)) {
                Ok((loss, grads)) if grads.is_finite() => (loss, grads),
                Ok(_) => return Err(diverged("non-finite gradient".into(), history)),
                Err(Error::NonFinite { detail, .. }) => return Err(diverged(detail, history)),
                Err(e) => return Err(e),
            };
            sum += loss.as_f64() * idx.len() as f64;
            adam.step(model.params_mut(), grads.slices(), config.learning_rate);
        }
        let train_loss = sum / data.len() as f64;
        let val_loss = val_data.as_ref().map(|v| chunked_loss(&model, v)).transpose()?;
        log::info!(
            "epoch {epoch}: train {train_loss:.6} val {}",
            val_loss.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
        );
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss });

        if train_loss < best_loss - MIN_IMPROVEMENT {
            best_loss = train_loss;
            best_model = model.clone();
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                history.stop = StopReason::EarlyStop;
                break;
            }
        }
    }
    Ok((best_model, history))
}

/// Forecast for one window in raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDecomposition {
    pub total: Vec<f64>,
    pub trend: Vec<f64>,
    pub seasonality: Vec<f64>,
    pub exogenous: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub anchor: NaiveDateTime,
    /// Timestamp of each horizon step, `anchor + h` hours.
    pub timestamps: Vec<NaiveDateTime>,
    pub actual: Vec<f64>,
    pub decomposition: ForecastDecomposition,
}

impl Forecast {
    /// Prediction for horizon step `h` (1-based).
    pub fn at(&self, h: usize) -> f64 {
        self.decomposition.total[h - 1]
    }
}

/// Inference over `windows` with outputs mapped back to raw counts.
///
/// The target mean is attributed to the trend component and the other
/// components are rescaled only, so the components still add up to the
/// total.
pub fn predict<T: Scalar>(model: &NBeatsX<T>, windows: &[SupervisedWindow], target: Standardizer) -> Result<Vec<Forecast>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_CHUNK) {
        let batch: Batch<T> = Batch::from_windows(chunk, model.dims)?;
        let d = model.forward(&batch, None)?.decomposition;
        for (i, w) in chunk.iter().enumerate() {
            let trend: Vec<f64> = d.trend.row(i).iter().map(|v| v.as_f64() * target.std + target.mean).collect();
            let seasonality: Vec<f64> = d.seasonality.row(i).iter().map(|v| v.as_f64() * target.std).collect();
            let exogenous: Vec<f64> = d.exogenous.row(i).iter().map(|v| v.as_f64() * target.std).collect();
            let total = (0..trend.len()).map(|h| trend[h] + seasonality[h] + exogenous[h]).collect();
            out.push(Forecast {
                anchor: w.anchor,
                timestamps: (1..=w.horizon()).map(|h| w.anchor + Duration::hours(h as i64)).collect(),
                actual: w.actual.clone(),
                decomposition: ForecastDecomposition { total, trend, seasonality, exogenous },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbeatsx::StackSpec;
    use chrono::NaiveDate;
    use ndarray::Array2;

    /// Windows over `y = a + b t` with one future-known covariate.
    fn linear_windows(n: usize, l: usize, h: usize) -> Vec<SupervisedWindow> {
        let t0 = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let y = |t: usize| -1.0 + 2.0 * t as f64 / n as f64;
        let cov = |t: usize| ((t % 24) as f64 / 12.0) - 1.0;
        (l - 1..n - h)
            .map(|a| SupervisedWindow {
                anchor: t0 + Duration::hours(a as i64),
                history: Array2::from_shape_fn((l, 2), |(i, j)| {
                    let t = a + 1 + i - l;
                    if j == 0 { y(t) } else { cov(t) }
                }),
                future: Array2::from_shape_fn((h, 1), |(k, _)| cov(a + 1 + k)),
                target: (1..=h).map(|k| y(a + k)).collect(),
                actual: (1..=h).map(|k| y(a + k)).collect(),
            })
            .collect()
    }

    /// Windows cut from `k` independent lines `y = a + b t` with random
    /// intercept and slope.
    fn trend_windows(k: usize, l: usize, h: usize, seed: u64) -> Vec<SupervisedWindow> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t0 = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let cov = |t: usize| ((t % 24) as f64 / 12.0) - 1.0;
        let mut out = Vec::new();
        for _ in 0..k {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-0.1..0.1);
            let y = |t: usize| a + b * t as f64;
            out.extend((l - 1..40 - h).map(|an| SupervisedWindow {
                anchor: t0 + Duration::hours(an as i64),
                history: Array2::from_shape_fn((l, 2), |(i, j)| {
                    let t = an + 1 + i - l;
                    if j == 0 { y(t) } else { cov(t) }
                }),
                future: Array2::from_shape_fn((h, 1), |(s, _)| cov(an + 1 + s)),
                target: (1..=h).map(|s| y(an + s)).collect(),
                actual: (1..=h).map(|s| y(an + s)).collect(),
            }));
        }
        out
    }

    fn small(seed: u64) -> NBeatsXConfig {
        NBeatsXConfig {
            lookback: 8,
            horizon: 3,
            stacks: vec![
                StackSpec::trend(1, vec![16, 16], 2),
                StackSpec::seasonality(1, vec![16], 1),
                StackSpec::exogenous(1, vec![16]),
            ],
            learning_rate: 0.003,
            dropout: 0.0,
            batch_size: 32,
            max_epochs: 5,
            patience: 3,
            seed,
        }
    }

    #[test]
    fn loss_decreases_on_linear_trend() {
        let w = linear_windows(400, 8, 3);
        let (_, hist) = train::<f64>(&small(3), &w, &[]).unwrap();
        assert_eq!(hist.epochs.len(), 5);
        for pair in hist.epochs.windows(2) {
            assert!(pair[1].train_loss <= pair[0].train_loss, "{:?}", hist.epochs);
        }
    }

    #[test]
    fn fits_pure_trend() {
        // held-out lines drawn from the same generator
        let tr = trend_windows(20, 8, 3, 1);
        let va = trend_windows(5, 8, 3, 2);
        let mut cfg = small(1);
        cfg.max_epochs = 50;
        cfg.patience = 5;
        let (model, _) = train::<f64>(&cfg, &tr, &va).unwrap();
        let pred = predict(&model, &va, Standardizer::IDENTITY).unwrap();
        let y: Vec<f64> = pred.iter().flat_map(|f| f.actual.clone()).collect();
        let p: Vec<f64> = pred.iter().flat_map(|f| f.decomposition.total.clone()).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sse: f64 = y.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
        let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
        assert!(1.0 - sse / sst > 0.99, "R2 = {}", 1.0 - sse / sst);
    }

    #[test]
    fn training_is_deterministic() {
        let w = linear_windows(200, 8, 3);
        let mut cfg = small(9);
        cfg.dropout = 0.1;
        cfg.max_epochs = 3;
        let (a, ha) = train::<f64>(&cfg, &w, &w[..20]).unwrap();
        let (b, hb) = train::<f64>(&cfg, &w, &w[..20]).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        cfg.seed = 10;
        let (c, _) = train::<f64>(&cfg, &w, &[]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn patience_zero_stops_at_first_stall() {
        let w = linear_windows(120, 8, 3);
        let mut cfg = small(2);
        cfg.learning_rate = 0.0;
        cfg.patience = 0;
        cfg.max_epochs = 10;
        let (_, hist) = train::<f64>(&cfg, &w, &[]).unwrap();
        assert_eq!(hist.epochs.len(), 2);
        assert_eq!(hist.best_epoch, 1);
        assert_eq!(hist.stop, StopReason::EarlyStop);
    }

    #[test]
    fn divergence_returns_history() {
        let mut w = linear_windows(120, 8, 3);
        w[5].target[0] = f64::INFINITY;
        let err = train::<f64>(&small(2), &w, &[]).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn predictions_align_with_target_hours() {
        let w = linear_windows(100, 8, 3);
        let mut cfg = small(4);
        cfg.max_epochs = 1;
        let (model, _) = train::<f64>(&cfg, &w, &[]).unwrap();
        let s = Standardizer { mean: 10.0, std: 2.0 };
        let pred = predict(&model, &w, s).unwrap();
        for (f, win) in pred.iter().zip(&w) {
            assert_eq!(f.timestamps.last().copied(), Some(win.anchor + Duration::hours(3)));
            assert_eq!(f.actual, win.actual);
            for h in 0..3 {
                let d = &f.decomposition;
                assert_eq!(d.total[h], d.trend[h] + d.seasonality[h] + d.exogenous[h]);
            }
        }
        assert_eq!(pred, predict(&model, &w, s).unwrap());
    }
}
