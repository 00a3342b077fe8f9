//! Columnar hourly table shared by feature engineering and dataset
//! construction. Missing cells (lag warmup, incomplete rolling windows)
//! are stored as NaN and written as empty CSV fields.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, parse_timestamp};

/// Stable column order of the assembled hourly table.
pub const HOURLY_COLUMNS: [&str; 28] = [
    "year",
    "month",
    "day_of_month",
    "day_of_week",
    "hour",
    "boarding_count",
    "boarding_count_esi12",
    "boarding_count_esi3",
    "boarding_count_esi45",
    "avg_boarding_time",
    "waiting_count",
    "waiting_count_esi12",
    "waiting_count_esi3",
    "waiting_count_esi45",
    "avg_waiting_time",
    "treatment_count",
    "avg_treatment_time",
    "extreme_indicator",
    "hospital_census",
    "temperature",
    "weather_clear",
    "weather_clouds",
    "weather_rain",
    "weather_thunderstorm",
    "weather_others",
    "federal_holiday",
    "football_game1",
    "football_game2",
];

pub const TARGET_COLUMN: &str = "boarding_count";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Integer calendar field derived from the timestamp.
    Calendar,
    /// Snapshot head count.
    Count,
    /// Duration in minutes.
    Minutes,
    /// 0/1 indicator.
    Binary,
    /// Any other real-valued measurement.
    Continuous,
}

impl ColumnKind {
    pub fn is_binary(self) -> bool {
        self == ColumnKind::Binary
    }
}

/// Kind of a base column of the hourly table, by name.
pub fn column_kind(name: &str) -> Option<ColumnKind> {
    let kind = match name {
        "year" | "month" | "day_of_month" | "day_of_week" | "hour" => ColumnKind::Calendar,
        "avg_boarding_time" | "avg_waiting_time" | "avg_treatment_time" => ColumnKind::Minutes,
        "temperature" => ColumnKind::Continuous,
        n if n.starts_with("weather_")
            || n == "extreme_indicator"
            || n == "federal_holiday"
            || n.starts_with("football_game") =>
        {
            ColumnKind::Binary
        }
        n if HOURLY_COLUMNS.contains(&n) => ColumnKind::Count,
        _ => return None,
    };
    Some(kind)
}

/// Columns whose values are known ahead of time for any future hour.
pub fn is_future_known(name: &str) -> bool {
    matches!(
        name,
        "year"
            | "month"
            | "day_of_month"
            | "day_of_week"
            | "hour"
            | "federal_holiday"
            | "football_game1"
            | "football_game2"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HourlyTable {
    pub timestamps: Vec<NaiveDateTime>,
    pub columns: Vec<Column>,
}

impl HourlyTable {
    pub fn new(timestamps: Vec<NaiveDateTime>) -> Self {
        HourlyTable {
            timestamps,
            columns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Appends a column, replacing any existing column of the same name.
    pub fn push_column(&mut self, name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.len() {
            return Err(Error::shape(format!(
                "column `{name}` has {} values, table has {} rows",
                values.len(),
                self.len()
            )));
        }
        let col = Column { name, kind, values };
        match self.columns.iter_mut().find(|c| c.name == col.name) {
            Some(existing) => *existing = col,
            None => self.columns.push(col),
        }
        Ok(())
    }

    /// True when rows `from..=to` are consecutive hours.
    pub fn is_contiguous(&self, from: usize, to: usize) -> bool {
        from <= to
            && to < self.len()
            && self.timestamps[to] - self.timestamps[from] == Duration::hours((to - from) as i64)
    }

    pub fn retain_rows(&self, keep: impl Fn(usize, NaiveDateTime) -> bool) -> HourlyTable {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| keep(i, self.timestamps[i]))
            .collect();
        HourlyTable {
            timestamps: rows.iter().map(|&i| self.timestamps[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(format_timestamp(self.timestamps[i]));
            for c in &self.columns {
                rec.push(format_cell(c.values[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`HourlyTable::write_csv`]. Column kinds
    /// are recovered from the base column name (lag and rolling columns
    /// inherit the kind of their source).
    pub fn read_csv<R: Read>(source: R) -> Result<HourlyTable> {
        let mut r = csv::Reader::from_reader(source);
        let header = r.headers()?.clone();
        if header.get(0) != Some("timestamp") {
            return Err(Error::MissingColumn("timestamp".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut timestamps = Vec::new();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let ts = parse_timestamp(&rec[0])
                .ok_or_else(|| Error::invalid(format!("row {}: bad timestamp `{}`", row + 1, &rec[0])))?;
            timestamps.push(ts);
            for (j, col) in values.iter_mut().enumerate() {
                let cell = rec.get(j + 1).unwrap_or("").trim();
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::invalid(format!("row {}: bad number `{cell}`", row + 1))
                    })?
                };
                col.push(v);
            }
        }
        let mut table = HourlyTable::new(timestamps);
        for (name, vals) in names.into_iter().zip(values) {
            let kind = column_kind(base_name(&name)).unwrap_or(ColumnKind::Continuous);
            table.push_column(name, kind, vals)?;
        }
        Ok(table)
    }
}

/// Strips a `_lag_k` or `_roll_w` suffix.
pub fn base_name(name: &str) -> &str {
    for marker in ["_lag_", "_roll_"] {
        if let Some(pos) = name.rfind(marker) {
            if name[pos + marker.len()..].chars().all(|c| c.is_ascii_digit()) {
                return &name[..pos];
            }
        }
    }
    name
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Shortest representation that parses back to the same value.
        format!("{v}")
    }
}
