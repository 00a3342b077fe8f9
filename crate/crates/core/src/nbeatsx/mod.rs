//! N-BEATSx written from scratch: trend, seasonality and exogenous stacks
//! of fully connected blocks with doubly residual backcast/forecast flow,
//! hand-derived gradients, Adam and early stopping.
//!
//! Everything here is generic over [`Scalar`](crate::Scalar); the pipeline
//! uses `f64`.

mod adam;
mod basis;
mod batch;
mod block;
mod checkpoint;
mod dense;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use basis::{seasonality_basis, trend_basis, BasisPair};
pub use batch::Batch;
pub use block::{Block, BlockCache, BlockGrad};
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dense::{Dense, DenseGrad};
pub use model::{Decomposition, ForwardPass, Gradients, NBeatsX};
pub use train::{dims_of, predict, train, MIN_IMPROVEMENT, EpochRecord, Forecast, ForecastDecomposition, History, StopReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackKind {
    Trend,
    Seasonality,
    Exogenous,
}

impl StackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StackKind::Trend => "trend",
            StackKind::Seasonality => "seasonality",
            StackKind::Exogenous => "exogenous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSpec {
    pub kind: StackKind,
    pub blocks: usize,
    pub hidden_widths: Vec<usize>,
    /// Polynomial degree, trend stacks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Fourier harmonics, seasonality stacks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<usize>,
}

impl StackSpec {
    pub fn trend(blocks: usize, hidden_widths: Vec<usize>, degree: usize) -> Self {
        StackSpec {
            kind: StackKind::Trend,
            blocks,
            hidden_widths,
            degree: Some(degree),
            harmonics: None,
        }
    }

    pub fn seasonality(blocks: usize, hidden_widths: Vec<usize>, harmonics: usize) -> Self {
        StackSpec {
            kind: StackKind::Seasonality,
            blocks,
            hidden_widths,
            degree: None,
            harmonics: Some(harmonics),
        }
    }

    pub fn exogenous(blocks: usize, hidden_widths: Vec<usize>) -> Self {
        StackSpec {
            kind: StackKind::Exogenous,
            blocks,
            hidden_widths,
            degree: None,
            harmonics: None,
        }
    }

    pub fn layers_per_block(&self) -> usize {
        self.hidden_widths.len()
    }

    fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::invalid(format!("{} stack has no blocks", self.kind.as_str())));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::invalid(format!(
                "{} stack needs at least one layer and positive widths",
                self.kind.as_str()
            )));
        }
        match self.kind {
            StackKind::Trend if self.degree.is_none() => {
                Err(Error::invalid("trend stack requires `degree`"))
            }
            StackKind::Seasonality if !matches!(self.harmonics, Some(k) if k >= 1) => {
                Err(Error::invalid("seasonality stack requires `harmonics` >= 1"))
            }
            _ => Ok(()),
        }
    }
}

fn default_patience() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBeatsXConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub stacks: Vec<StackSpec>,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    pub seed: u64,
}

impl Default for NBeatsXConfig {
    /// Three stacks of two blocks with three hidden layers each, L = 12,
    /// H = 6, lr 0.003, dropout 0.1, batch 128.
    fn default() -> Self {
        let horizon = 6;
        NBeatsXConfig {
            lookback: 12,
            horizon,
            stacks: vec![
                StackSpec::trend(2, vec![128; 3], 3),
                StackSpec::seasonality(2, vec![128; 3], horizon / 2),
                StackSpec::exogenous(2, vec![256; 3]),
            ],
            learning_rate: 0.003,
            dropout: 0.1,
            batch_size: 128,
            max_epochs: 30,
            patience: default_patience(),
            seed: 0,
        }
    }
}

impl NBeatsXConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(Error::invalid("lookback and horizon must be >= 1"));
        }
        if self.stacks.is_empty() {
            return Err(Error::invalid("at least one stack is required"));
        }
        for s in &self.stacks {
            s.validate()?;
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size and max_epochs must be >= 1"));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.stacks.iter().map(|s| s.blocks).sum()
    }

    pub fn has_exogenous(&self) -> bool {
        self.stacks.iter().any(|s| s.kind == StackKind::Exogenous)
    }
}

/// Input dimensions fixed by the dataset layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub lookback: usize,
    pub horizon: usize,
    /// Covariates read over the lookback, target excluded.
    pub history_features: usize,
    /// Known-in-advance covariates read over the horizon.
    pub future_features: usize,
}

impl ModelDims {
    /// Width of the covariate part of a block input.
    pub fn exo_width(&self) -> usize {
        self.lookback * self.history_features + self.horizon * self.future_features
    }

    /// Width of a block input: residual then covariates.
    pub fn input_width(&self) -> usize {
        self.lookback + self.exo_width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = NBeatsXConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_blocks(), 6);
        assert_eq!(c.stacks[1].harmonics, Some(3));
        assert!(c.stacks.iter().all(|s| s.layers_per_block() == 3));
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<NBeatsXConfig>(&json).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = NBeatsXConfig::default();
        c.stacks.clear();
        assert!(c.validate().is_err());
        let mut c = NBeatsXConfig::default();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = NBeatsXConfig::default();
        c.stacks[1].harmonics = Some(0);
        assert!(c.validate().is_err());
        let mut c = NBeatsXConfig::default();
        c.stacks[0].hidden_widths = vec![];
        assert!(c.validate().is_err());
    }
}
