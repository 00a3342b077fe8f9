//! Dataset variants, chronological splitting, scaling and supervised
//! windows.
//!
//! A [`Variant`] carries two views of the same rows:
//!
//! * `tabular`: the columns exactly as the manifest expands them, lag and
//!   rolling columns included. This is what gets exported.
//! * `sequence`: what the forecasting model reads over its lookback window.
//!   Lag columns are replaced by their source series because the lookback
//!   already supplies those lags; the target itself is carried separately.

mod manifest;
mod scaler;
mod window;

use std::io::Write;
use std::ops::Range;

use chrono::NaiveDateTime;
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::format_timestamp;
use crate::preprocess::{add_lags, add_rolling_mean, lag_column_name, rolling_column_name};
use crate::table::{column_kind, is_future_known, ColumnKind, HourlyTable, TARGET_COLUMN};

pub use manifest::{expand_group, FeatureEntry, FeatureManifest, Transform, VARIANT_IDS};
pub use scaler::{ColumnStat, Scaler, Standardizer};
pub use window::{make_windows, SupervisedWindow, WindowLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Value is known in advance for future hours (calendar and event flags).
    pub future_known: bool,
}

/// Row-major feature matrix with the forecast target alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub timestamps: Vec<NaiveDateTime>,
    /// Target in model units (equal to `target_raw` until scaled).
    pub target: Vec<f64>,
    pub target_raw: Vec<f64>,
    pub columns: Vec<ColumnSpec>,
    /// `rows x columns`
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn slice_rows(&self, rows: Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            timestamps: self.timestamps[rows.clone()].to_vec(),
            target: self.target[rows.clone()].to_vec(),
            target_raw: self.target_raw[rows.clone()].to_vec(),
            columns: self.columns.clone(),
            data: self.data.slice(s![rows, ..]).to_owned(),
        }
    }

    /// True when rows `from..=to` are consecutive hours.
    pub fn is_contiguous(&self, from: usize, to: usize) -> bool {
        from <= to
            && to < self.n_rows()
            && (self.timestamps[to] - self.timestamps[from]).num_hours() == (to - from) as i64
            && (self.timestamps[to] - self.timestamps[from]).num_seconds() % 3600 == 0
    }

    /// Writes `timestamp, <target>, <columns...>` with raw target values.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["timestamp".to_string(), TARGET_COLUMN.to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (i, row) in self.data.axis_iter(Axis(0)).enumerate() {
            let mut rec = vec![format_timestamp(self.timestamps[i]), format!("{}", self.target_raw[i])];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Materialized dataset variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub id: String,
    pub tabular: FeatureMatrix,
    pub sequence: FeatureMatrix,
    /// Rows dropped because a lag or rolling column was still warming up.
    pub warmup_rows: usize,
}

fn spec_for(name: &str, kind: ColumnKind, transformed: bool) -> ColumnSpec {
    ColumnSpec {
        name: name.to_string(),
        kind,
        future_known: !transformed && is_future_known(name),
    }
}

fn matrix(table: &HourlyTable, rows: &[usize], specs: Vec<ColumnSpec>) -> Result<FeatureMatrix> {
    let target = table.values(TARGET_COLUMN)?;
    let cols = specs
        .iter()
        .map(|c| table.values(&c.name))
        .collect::<Result<Vec<_>>>()?;
    let data = Array2::from_shape_fn((rows.len(), specs.len()), |(i, j)| cols[j][rows[i]]);
    let target: Vec<f64> = rows.iter().map(|&r| target[r]).collect();
    Ok(FeatureMatrix {
        timestamps: rows.iter().map(|&r| table.timestamps[r]).collect(),
        target_raw: target.clone(),
        target,
        columns: specs,
        data,
    })
}

/// Builds the variant described by `manifest` from the hourly table.
/// Rows where any selected column is missing (lag warmup, incomplete
/// rolling window) are dropped from both views.
pub fn build_variant(table: &HourlyTable, manifest: &FeatureManifest) -> Result<Variant> {
    manifest.validate()?;
    table.values(TARGET_COLUMN)?;
    let mut work = table.clone();
    let mut tabular: Vec<ColumnSpec> = Vec::new();
    let mut sequence: Vec<ColumnSpec> = Vec::new();
    let push_unique = |list: &mut Vec<ColumnSpec>, spec: ColumnSpec| {
        if !list.iter().any(|c| c.name == spec.name) {
            list.push(spec);
        }
    };

    for entry in &manifest.features {
        for base in expand_group(&entry.name) {
            let kind = table
                .column(base)
                .map(|c| c.kind)
                .or_else(|| column_kind(base))
                .ok_or_else(|| Error::UnknownFeature(base.to_string()))?;
            table.values(base)?;
            match entry.transform {
                Transform::Raw => {
                    push_unique(&mut tabular, spec_for(base, kind, false));
                    if base != TARGET_COLUMN {
                        push_unique(&mut sequence, spec_for(base, kind, false));
                    }
                }
                Transform::Lags(w) => {
                    add_lags(&mut work, base, w)?;
                    for k in 1..=w {
                        push_unique(&mut tabular, spec_for(&lag_column_name(base, k), kind, true));
                    }
                    if base != TARGET_COLUMN {
                        push_unique(&mut sequence, spec_for(base, kind, false));
                    }
                }
                Transform::Rolling(w) => {
                    add_rolling_mean(&mut work, base, w, manifest.rolling_alignment)?;
                    let spec = spec_for(&rolling_column_name(base, w), kind, true);
                    push_unique(&mut tabular, spec.clone());
                    push_unique(&mut sequence, spec);
                }
            }
        }
    }

    let target = work.values(TARGET_COLUMN)?;
    let check: Vec<&[f64]> = tabular
        .iter()
        .chain(&sequence)
        .map(|c| work.values(&c.name))
        .collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..work.len())
        .filter(|&r| target[r].is_finite() && check.iter().all(|c| c[r].is_finite()))
        .collect();
    let warmup_rows = work.len() - rows.len();

    Ok(Variant {
        id: manifest.id.clone(),
        tabular: matrix(&work, &rows, tabular)?,
        sequence: matrix(&work, &rows, sequence)?,
        warmup_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    /// Segment sizes: `floor(train * n)`, `floor(val * n)`, remainder.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let ok = [self.train, self.val, self.test].iter().all(|f| (0.0..=1.0).contains(f));
        if !ok || (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions must be in [0,1] and sum to 1: {self:?}")));
        }
        // Guard against products like 0.7 * 30 = 20.999999999999996.
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train);
        let val = floor(self.val).min(n - train);
        Ok((train, val, n - train - val))
    }
}

/// Contiguous, ordered, disjoint train / validation / test segments.
pub fn chronological_split(
    matrix: &FeatureMatrix,
    fractions: SplitFractions,
) -> Result<(FeatureMatrix, FeatureMatrix, FeatureMatrix)> {
    let n = matrix.n_rows();
    let (a, b, c) = fractions.sizes(n)?;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::invalid(format!(
            "{n} rows are too few to split into {a}/{b}/{c}"
        )));
    }
    Ok((
        matrix.slice_rows(0..a),
        matrix.slice_rows(a..a + b),
        matrix.slice_rows(a + b..n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;
    use chrono::Duration;

    pub(crate) fn toy_table(n: usize) -> HourlyTable {
        let t0 = parse_timestamp("2021-03-01 00:00:00").unwrap();
        let ts: Vec<_> = (0..n).map(|i| t0 + Duration::hours(i as i64)).collect();
        let mut t = HourlyTable::new(ts.clone());
        for name in crate::table::HOURLY_COLUMNS {
            let kind = column_kind(name).unwrap();
            let values = (0..n)
                .map(|i| match kind {
                    ColumnKind::Binary => ((i / 3) % 2) as f64,
                    _ => (i as f64 * 0.37 + name.len() as f64).sin() * 10.0 + 20.0,
                })
                .collect();
            t.push_column(name, kind, values).unwrap();
        }
        t
    }

    #[test]
    fn ds1_expansion_and_views() {
        let table = toy_table(100);
        let v = build_variant(&table, &FeatureManifest::builtin("DS1").unwrap()).unwrap();
        assert_eq!(v.tabular.n_cols(), 18);
        assert_eq!(v.warmup_rows, 12);
        assert_eq!(v.tabular.n_rows(), 88);
        assert_eq!(v.tabular.timestamps[0], table.timestamps[12]);
        // model view: indicator + calendar; boarding lags collapse into the target history
        assert_eq!(
            v.sequence.column_names(),
            vec!["extreme_indicator", "year", "month", "day_of_month", "day_of_week", "hour"]
        );
        let fk: Vec<_> = v.sequence.columns.iter().map(|c| c.future_known).collect();
        assert_eq!(fk, vec![false, true, true, true, true, true]);
        // lag column at row r equals the target `k` rows earlier
        let lag3 = v.tabular.column_index("boarding_count_lag_3").unwrap();
        for r in 3..v.tabular.n_rows() {
            assert_eq!(v.tabular.data[[r, lag3]], v.tabular.target[r - 3]);
        }
    }

    #[test]
    fn ds4_and_ds5_share_model_view() {
        let table = toy_table(200);
        let v4 = build_variant(&table, &FeatureManifest::builtin("DS4").unwrap()).unwrap();
        let v5 = build_variant(&table, &FeatureManifest::builtin("DS5").unwrap()).unwrap();
        let mut a = v4.sequence.column_names();
        let mut b = v5.sequence.column_names();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(v5.tabular.n_cols() > v4.tabular.n_cols());
    }

    #[test]
    fn unknown_and_empty_manifests() {
        let table = toy_table(50);
        let m = FeatureManifest::from_json(r#"{"id":"x","features":[{"name":"bogus"}]}"#).unwrap();
        assert!(matches!(build_variant(&table, &m), Err(Error::UnknownFeature(n)) if n == "bogus"));
        let empty = FeatureManifest {
            id: "e".into(),
            description: String::new(),
            rolling_alignment: Default::default(),
            features: vec![],
        };
        assert!(build_variant(&table, &empty).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let table = toy_table(80);
        let m = FeatureManifest::builtin("DS3").unwrap();
        assert_eq!(build_variant(&table, &m).unwrap(), build_variant(&table, &m).unwrap());
    }

    #[test]
    fn split_sizes() {
        let f = SplitFractions::default();
        assert_eq!(f.sizes(37_236).unwrap(), (26_065, 5_585, 5_586));
        assert_eq!(f.sizes(100).unwrap(), (70, 15, 15));
        assert_eq!(f.sizes(30).unwrap(), (21, 4, 5));
        assert!(SplitFractions { train: 0.5, val: 0.5, test: 0.5 }.sizes(10).is_err());

        let table = toy_table(100);
        let v = build_variant(&table, &FeatureManifest::builtin("DS2").unwrap()).unwrap();
        let (tr, va, te) = chronological_split(&v.sequence, f).unwrap();
        assert_eq!(tr.n_rows() + va.n_rows() + te.n_rows(), v.sequence.n_rows());
        assert!(tr.timestamps.last() < va.timestamps.first());
        assert!(va.timestamps.last() < te.timestamps.first());
        assert!(chronological_split(&v.sequence.slice_rows(0..3), f).is_err());
    }
}
