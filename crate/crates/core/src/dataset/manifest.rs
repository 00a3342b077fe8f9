use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::RollingAlignment;

/// Transform applied to one manifest entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Raw,
    /// Lags `1..=W`.
    Lags(usize),
    /// Rolling mean over `W` rows.
    Rolling(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    /// A column of the hourly table or one of the group names
    /// (`calendar`, `weather_status`, `boarding_count_by_esi`,
    /// `waiting_count_by_esi`).
    pub name: String,
    #[serde(default)]
    pub transform: Transform,
}

/// Declarative list of the features making up a dataset variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub rolling_alignment: RollingAlignment,
    pub features: Vec<FeatureEntry>,
}

const BUILTIN: [(&str, &str); 5] = [
    ("DS1", include_str!("../../manifests/ds1.json")),
    ("DS2", include_str!("../../manifests/ds2.json")),
    ("DS3", include_str!("../../manifests/ds3.json")),
    ("DS4", include_str!("../../manifests/ds4.json")),
    ("DS5", include_str!("../../manifests/ds5.json")),
];

pub const VARIANT_IDS: [&str; 5] = ["DS1", "DS2", "DS3", "DS4", "DS5"];

/// Expands a group name into its member columns; plain columns expand to
/// themselves.
pub fn expand_group(name: &str) -> Vec<&str> {
    match name {
        "calendar" => vec!["year", "month", "day_of_month", "day_of_week", "hour"],
        "weather_status" => vec![
            "weather_clear",
            "weather_clouds",
            "weather_rain",
            "weather_thunderstorm",
            "weather_others",
        ],
        "boarding_count_by_esi" => vec![
            "boarding_count_esi12",
            "boarding_count_esi3",
            "boarding_count_esi45",
        ],
        "waiting_count_by_esi" => vec![
            "waiting_count_esi12",
            "waiting_count_esi3",
            "waiting_count_esi45",
        ],
        other => vec![other],
    }
}

impl FeatureManifest {
    pub fn builtin(id: &str) -> Result<FeatureManifest> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(id))
            .ok_or_else(|| Error::invalid(format!("unknown dataset variant `{id}`")))?;
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<FeatureManifest> {
        let m: FeatureManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<FeatureManifest> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A built-in id (`DS1`..`DS5`) or a path to a manifest file.
    pub fn resolve(id_or_path: &str) -> Result<FeatureManifest> {
        if VARIANT_IDS.iter().any(|v| v.eq_ignore_ascii_case(id_or_path)) {
            Self::builtin(id_or_path)
        } else {
            Self::load(Path::new(id_or_path))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::invalid(format!("manifest `{}` lists no features", self.id)));
        }
        for f in &self.features {
            match f.transform {
                Transform::Lags(0) => {
                    return Err(Error::invalid(format!("`{}`: lag window must be >= 1", f.name)))
                }
                Transform::Rolling(w) if w < 2 => {
                    return Err(Error::invalid(format!("`{}`: rolling window must be >= 2", f.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Number of columns the manifest expands to.
    pub fn expanded_width(&self) -> usize {
        self.features
            .iter()
            .map(|f| {
                let members = expand_group(&f.name).len();
                match f.transform {
                    Transform::Lags(w) => members * w,
                    _ => members,
                }
            })
            .sum()
    }
}
