use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::NBeatsX;
use super::{ModelDims, NBeatsXConfig};
use crate::dataset::{Scaler, WindowLayout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "boardcast-nbeatsx";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values, widened to `f64`.
    pub data: Vec<f64>,
}

/// Self-describing model file: config echo, seed, input layout, scaler and
/// every weight tensor by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub seed: u64,
    pub config: NBeatsXConfig,
    pub dims: ModelDims,
    #[serde(default)]
    pub layout: Option<WindowLayout>,
    #[serde(default)]
    pub scaler: Option<Scaler>,
    /// Feature manifest id the model was trained on.
    #[serde(default)]
    pub variant: Option<String>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &NBeatsX<T>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scalar: T::type_name().into(),
            seed: model.config.seed,
            config: model.config.clone(),
            dims: model.dims,
            layout: None,
            scaler: None,
            variant: None,
            tensors: model
                .named_params()
                .into_iter()
                .map(|(name, shape, data)| NamedTensor {
                    name,
                    shape,
                    data: data.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model. Tensors are matched by name and shape.
    pub fn to_model<T: Scalar>(&self) -> Result<NBeatsX<T>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version {}", self.version)));
        }
        let mut model: NBeatsX<T> = NBeatsX::new(self.config.clone(), self.dims)?;
        let expected: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, model has {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), (slot, t)) in expected.iter().zip(model.params_mut().into_iter().zip(&self.tensors)) {
            if &t.name != name || &t.shape != shape || t.data.len() != slot.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match `{name}` {shape:?}",
                    t.name, t.shape
                )));
            }
            for (dst, &v) in slot.iter_mut().zip(&t.data) {
                *dst = T::lit(v);
            }
        }
        model.restore_bases();
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
