//! Exhaustive grid search over model configurations.
//!
//! Trial `i` of the Cartesian product is trained with seed `base_seed + i`,
//! so results do not depend on the order trials run in. Trials are ranked by
//! validation MAE at the last horizon step, then validation MSE, then grid
//! order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureManifest, SplitFractions};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::nbeatsx::{History, NBeatsXConfig, StackSpec, StopReason};
use crate::pipeline::{create, fit, forecast, horizon_metrics, prepare, Prepared, Segment};
use crate::table::HourlyTable;

/// Candidate values per hyperparameter. Every list must be nonempty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rate: Vec<f64>,
    pub dropout: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub lookback: Vec<usize>,
    /// Each entry is a complete stack configuration.
    pub stacks: Vec<Vec<StackSpec>>,
}

impl Default for GridSpec {
    /// A small illustrative grid around the default model.
    fn default() -> Self {
        let base = NBeatsXConfig::default();
        let narrow = base
            .stacks
            .iter()
            .map(|s| StackSpec { hidden_widths: vec![128; 3], ..s.clone() })
            .collect();
        GridSpec {
            learning_rate: vec![0.001, 0.003],
            dropout: vec![0.0, 0.1],
            batch_size: vec![128],
            lookback: vec![12, 24],
            stacks: vec![base.stacks, narrow],
        }
    }
}

impl GridSpec {
    /// The grid holding exactly the settings of `config`.
    pub fn single(config: &NBeatsXConfig) -> Self {
        GridSpec {
            learning_rate: vec![config.learning_rate],
            dropout: vec![config.dropout],
            batch_size: vec![config.batch_size],
            lookback: vec![config.lookback],
            stacks: vec![config.stacks.clone()],
        }
    }

    pub fn len(&self) -> usize {
        self.learning_rate.len() * self.dropout.len() * self.batch_size.len() * self.lookback.len() * self.stacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("learning_rate", self.learning_rate.len()),
            ("dropout", self.dropout.len()),
            ("batch_size", self.batch_size.len()),
            ("lookback", self.lookback.len()),
            ("stacks", self.stacks.len()),
        ];
        for (name, n) in lists {
            if n == 0 {
                return Err(Error::invalid(format!("grid: `{name}` has no candidates")));
            }
        }
        Ok(())
    }

    /// Every configuration of the grid, in grid order, with `base`
    /// supplying the settings the grid does not vary. Seeds are left as in
    /// `base`; [`grid_search`] assigns them.
    pub fn configs(&self, base: &NBeatsXConfig) -> Result<Vec<NBeatsXConfig>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.len());
        for &learning_rate in &self.learning_rate {
            for &dropout in &self.dropout {
                for &batch_size in &self.batch_size {
                    for &lookback in &self.lookback {
                        for stacks in &self.stacks {
                            let c = NBeatsXConfig {
                                learning_rate,
                                dropout,
                                batch_size,
                                lookback,
                                stacks: stacks.clone(),
                                ..base.clone()
                            };
                            c.validate()?;
                            out.push(c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<GridSpec> {
        let g: GridSpec = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<GridSpec> {
        GridSpec::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub stop: StopReason,
}

impl HistorySummary {
    fn of(h: &History) -> Self {
        HistorySummary {
            epochs_run: h.epochs.len(),
            best_epoch: h.best_epoch,
            best_train_loss: h.best().map(|e| e.train_loss),
            final_val_loss: h.epochs.last().and_then(|e| e.val_loss),
            stop: h.stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Position in grid order.
    pub index: usize,
    pub seed: u64,
    pub config: NBeatsXConfig,
    /// Validation metrics at the last horizon step; `None` when aborted.
    pub validation: Option<MetricsReport>,
    pub history: HistorySummary,
    /// Full per-epoch history, also for aborted trials.
    pub epochs: History,
    pub wall_seconds: f64,
    pub aborted: Option<String>,
}

impl TrialResult {
    fn key(&self) -> (f64, f64) {
        match &self.validation {
            Some(m) => (m.mae, m.mse),
            None => (f64::INFINITY, f64::INFINITY),
        }
    }
}

/// Ranks trials in place: validation MAE, then MSE, then grid order.
/// Aborted trials go last.
pub fn rank(trials: &mut [TrialResult]) {
    trials.sort_by(compare);
}

fn run_trial(prepared: &Prepared, index: usize, config: NBeatsXConfig) -> Result<TrialResult> {
    let clock = Instant::now();
    let outcome = fit(prepared, &config).and_then(|(model, history)| {
        let val = forecast(&model, prepared, Segment::Validation)?;
        Ok((horizon_metrics(&val)?, history))
    });
    let (validation, epochs, aborted) = match outcome {
        Ok((m, h)) if m.mae.is_finite() && m.mse.is_finite() => (Some(m), h, None),
        Ok((_, h)) => (None, h, Some("non-finite validation metrics".to_string())),
        Err(Error::Diverged { epoch, batch, detail, history }) => {
            log::warn!("trial {index} diverged at epoch {epoch}: {detail}");
            (None, *history, Some(format!("diverged at epoch {epoch}, batch {batch}: {detail}")))
        }
        Err(e) => return Err(e),
    };
    Ok(TrialResult {
        index,
        seed: config.seed,
        history: HistorySummary::of(&epochs),
        config,
        validation,
        epochs,
        wall_seconds: clock.elapsed().as_secs_f64(),
        aborted,
    })
}

/// Trains every configuration of `grid` once and returns the ranked trials.
///
/// A trial that diverges is kept with an abort marker. Other errors stop
/// the search.
pub fn grid_search(
    grid: &GridSpec,
    base: &NBeatsXConfig,
    table: &HourlyTable,
    manifest: &FeatureManifest,
    split: SplitFractions,
    base_seed: u64,
) -> Result<Vec<TrialResult>> {
    let configs = grid.configs(base)?;
    let mut prepared: BTreeMap<usize, Prepared> = BTreeMap::new();
    let mut trials = Vec::with_capacity(configs.len());
    for (index, mut config) in configs.into_iter().enumerate() {
        config.seed = base_seed.wrapping_add(index as u64);
        if !prepared.contains_key(&config.lookback) {
            let p = prepare(table, manifest, split, config.lookback, config.horizon, None)?;
            prepared.insert(config.lookback, p);
        }
        log::info!("trial {}/{}: lr {} dropout {} batch {} lookback {}", index + 1, grid.len(), config.learning_rate, config.dropout, config.batch_size, config.lookback);
        trials.push(run_trial(&prepared[&config.lookback], index, config)?);
    }
    rank(&mut trials);
    Ok(trials)
}

fn stacks_label(stacks: &[StackSpec]) -> String {
    stacks
        .iter()
        .map(|s| {
            let widths: Vec<String> = s.hidden_widths.iter().map(|w| w.to_string()).collect();
            format!("{}x{}[{}]", s.kind.as_str(), s.blocks, widths.join(" "))
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes the ranked table, one row per trial.
pub fn write_results_csv<W: std::io::Write>(trials: &[TrialResult], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "rank", "trial", "seed", "learning_rate", "dropout", "batch_size", "lookback", "stacks", "val_mae", "val_mse",
        "val_rmse", "val_r2", "epochs_run", "best_epoch", "best_train_loss", "stop", "wall_seconds", "aborted",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (rank, t) in trials.iter().enumerate() {
        let m = t.validation.as_ref();
        let stop = serde_json::to_value(t.history.stop)?;
        w.write_record([
            (rank + 1).to_string(),
            t.index.to_string(),
            t.seed.to_string(),
            t.config.learning_rate.to_string(),
            t.config.dropout.to_string(),
            t.config.batch_size.to_string(),
            t.config.lookback.to_string(),
            stacks_label(&t.config.stacks),
            opt(m.map(|m| m.mae)),
            opt(m.map(|m| m.mse)),
            opt(m.map(|m| m.rmse)),
            opt(m.and_then(|m| m.r2)),
            t.history.epochs_run.to_string(),
            t.history.best_epoch.to_string(),
            opt(t.history.best_train_loss),
            stop.as_str().unwrap_or_default().to_string(),
            format!("{:.3}", t.wall_seconds),
            t.aborted.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv` and `trial_NNN_history.csv` files into `dir`.
/// Returns the paths written.
pub fn write_results(trials: &[TrialResult], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    write_results_csv(trials, create(&results)?)?;
    let mut paths = vec![results];
    let mut by_index: Vec<&TrialResult> = trials.iter().collect();
    by_index.sort_by_key(|t| t.index);
    for t in by_index {
        let p = dir.join(format!("trial_{:03}_history.csv", t.index));
        t.epochs.write_csv(create(&p)?)?;
        paths.push(p);
    }
    Ok(paths)
}

/// The ranking order.
pub fn compare(a: &TrialResult, b: &TrialResult) -> Ordering {
    let (ka, kb) = (a.key(), b.key());
    ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.index.cmp(&b.index))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(index: usize, mae: Option<f64>, mse: f64) -> TrialResult {
        TrialResult {
            index,
            seed: index as u64,
            config: NBeatsXConfig::default(),
            validation: mae.map(|mae| MetricsReport { mae, mse, rmse: mse.sqrt(), r2: None, n: 1 }),
            history: HistorySummary::of(&History { epochs: vec![], best_epoch: 0, stop: StopReason::MaxEpochs }),
            epochs: History { epochs: vec![], best_epoch: 0, stop: StopReason::MaxEpochs },
            wall_seconds: 0.0,
            aborted: mae.is_none().then(|| "diverged".into()),
        }
    }

    #[test]
    fn ranking_breaks_ties_by_mse_then_order() {
        let mut t = vec![trial(0, Some(2.0), 5.0), trial(1, None, 0.0), trial(2, Some(2.0), 4.0), trial(3, Some(1.0), 9.0), trial(4, Some(2.0), 4.0)];
        rank(&mut t);
        let order: Vec<usize> = t.iter().map(|t| t.index).collect();
        assert_eq!(order, vec![3, 2, 4, 0, 1]);
        assert!(t.windows(2).all(|w| compare(&w[0], &w[1]) == Ordering::Less));
    }

    #[test]
    fn grid_enumerates_cartesian_product() {
        let mut g = GridSpec::default();
        g.learning_rate = vec![0.003, 0.01];
        let configs = g.configs(&NBeatsXConfig::default()).unwrap();
        assert_eq!(configs.len(), g.len());
        assert_eq!(g.len(), 2 * 2 * 1 * 2 * 2);
        assert_eq!(configs[0].learning_rate, 0.003);
        assert_eq!(configs.last().unwrap().learning_rate, 0.01);
    }

    #[test]
    fn empty_list_rejected() {
        let mut g = GridSpec::default();
        g.dropout.clear();
        assert!(g.validate().is_err());
        assert!(GridSpec::from_json(r#"{"learning_rate":[],"dropout":[0.1],"batch_size":[1],"lookback":[1],"stacks":[]}"#).is_err());
    }

    #[test]
    fn best_cell_is_expressible() {
        let text = r#"{
            "learning_rate": [0.003], "dropout": [0.1], "batch_size": [128], "lookback": [12],
            "stacks": [[
                {"kind": "trend", "blocks": 2, "hidden_widths": [128, 128, 128], "degree": 3},
                {"kind": "seasonality", "blocks": 2, "hidden_widths": [128, 128, 128], "harmonics": 3},
                {"kind": "exogenous", "blocks": 2, "hidden_widths": [256, 256, 256]}
            ]]
        }"#;
        let g = GridSpec::from_json(text).unwrap();
        let c = &g.configs(&NBeatsXConfig::default()).unwrap()[0];
        assert_eq!(*c, NBeatsXConfig::default());
    }
}
