//! Cleaning, imputation, exclusion windows, weather grouping and
//! lag / rolling-mean transforms.

use std::collections::BTreeSet;

use chrono::{NaiveDate, NaiveDateTime};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{phase_interval, Phase};
use crate::ingest::{Esi, RawCondition, VisitTimeline};
use crate::table::HourlyTable;

/// Thresholds for dropping implausible visits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningRules {
    pub max_waiting_hours: f64,
    pub max_boarding_hours: f64,
    /// Seven months, 7 x 30.44 days.
    pub max_treatment_hours: f64,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            max_waiting_hours: 9.0,
            max_boarding_hours: 300.0,
            max_treatment_hours: 5112.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleaningRule {
    WaitingTooLong,
    StuckInTreatment,
    BoardingTooLong,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_visits: usize,
    pub kept_visits: usize,
    pub waiting_excluded: usize,
    pub boarding_excluded: usize,
    pub stuck_treatment_excluded: usize,
    pub esi_imputed: usize,
    pub waiting_excluded_fraction: f64,
    pub boarding_excluded_fraction: f64,
    pub stuck_treatment_excluded_fraction: f64,
    pub esi_imputed_fraction: f64,
    /// Visit ids removed, with the first rule each one broke.
    pub excluded: Vec<(String, CleaningRule)>,
    pub imputed_ids: Vec<String>,
}

impl CleaningReport {
    fn finish(&mut self) {
        let n = self.input_visits.max(1) as f64;
        self.waiting_excluded_fraction = self.waiting_excluded as f64 / n;
        self.boarding_excluded_fraction = self.boarding_excluded as f64 / n;
        self.stuck_treatment_excluded_fraction = self.stuck_treatment_excluded as f64 / n;
        self.esi_imputed_fraction = self.esi_imputed as f64 / self.kept_visits.max(1) as f64;
    }

    pub fn total_excluded(&self) -> usize {
        self.waiting_excluded + self.boarding_excluded + self.stuck_treatment_excluded
    }
}

fn hours_in(visit: &VisitTimeline, phase: Phase) -> f64 {
    phase_interval(visit, phase)
        .map(|iv| (iv.end - iv.start).num_seconds() as f64 / 3600.0)
        .unwrap_or(0.0)
}

/// First cleaning rule the visit violates, if any. Thresholds are strict:
/// a duration equal to the limit is kept.
pub fn violated_rule(visit: &VisitTimeline, rules: &CleaningRules) -> Option<CleaningRule> {
    if hours_in(visit, Phase::Waiting) > rules.max_waiting_hours {
        Some(CleaningRule::WaitingTooLong)
    } else if hours_in(visit, Phase::Treatment) > rules.max_treatment_hours {
        Some(CleaningRule::StuckInTreatment)
    } else if hours_in(visit, Phase::Boarding) > rules.max_boarding_hours {
        Some(CleaningRule::BoardingTooLong)
    } else {
        None
    }
}

pub fn clean_visits(visits: Vec<VisitTimeline>, rules: &CleaningRules) -> (Vec<VisitTimeline>, CleaningReport) {
    let mut report = CleaningReport {
        input_visits: visits.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(visits.len());
    for v in visits {
        match violated_rule(&v, rules) {
            None => kept.push(v),
            Some(rule) => {
                match rule {
                    CleaningRule::WaitingTooLong => report.waiting_excluded += 1,
                    CleaningRule::StuckInTreatment => report.stuck_treatment_excluded += 1,
                    CleaningRule::BoardingTooLong => report.boarding_excluded += 1,
                }
                report.excluded.push((v.visit_id, rule));
            }
        }
    }
    report.kept_visits = kept.len();
    report.finish();
    (kept, report)
}

/// ESI level assigned to visits with no recorded acuity.
pub const IMPUTED_ESI: u8 = 3;

/// Fills missing ESI with level 3 and records the imputations in `report`.
/// Obstetrics markers are left as they are.
pub fn impute_esi(visits: &mut [VisitTimeline], report: &mut CleaningReport) -> usize {
    let mut n = 0;
    for v in visits.iter_mut().filter(|v| v.esi.is_none()) {
        v.esi = Some(Esi::Level(IMPUTED_ESI));
        report.imputed_ids.push(v.visit_id.clone());
        n += 1;
    }
    report.esi_imputed += n;
    report.finish();
    n
}

/// Early-pandemic window removed from the hourly table.
pub fn covid_window() -> (NaiveDateTime, NaiveDateTime) {
    let from = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let to = NaiveDate::from_ymd_opt(2020, 7, 31).unwrap().and_hms_opt(23, 0, 0).unwrap();
    (from, to)
}

/// Drops rows with `from <= t <= to`. The gap stays visible through the
/// timestamps, which is how windowing detects it.
pub fn exclude_window(table: &HourlyTable, from: NaiveDateTime, to: NaiveDateTime) -> HourlyTable {
    table.retain_rows(|_, t| t < from || t > to)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeatherCategory {
    Clear,
    Clouds,
    Rain,
    Thunderstorm,
    Others,
}

pub fn group_weather(raw: RawCondition) -> WeatherCategory {
    use RawCondition::*;
    match raw {
        Clear => WeatherCategory::Clear,
        Clouds | Mist => WeatherCategory::Clouds,
        Rain | Drizzle => WeatherCategory::Rain,
        Thunderstorm => WeatherCategory::Thunderstorm,
        Fog | Haze | Snow | Smoke => WeatherCategory::Others,
    }
}

/// Groups a raw condition label; unknown labels are an error.
pub fn group_weather_label(label: &str) -> Result<WeatherCategory> {
    label
        .parse::<RawCondition>()
        .map(group_weather)
        .map_err(|_| Error::invalid(format!("unknown weather condition `{label}`")))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollingAlignment {
    /// Window centered on the row; reads future rows.
    #[default]
    Centered,
    /// Window ending at the row.
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    pub column: String,
    /// Produces lags 1..=lags. Zero means no lag columns.
    pub lags: usize,
    pub rolling: Option<usize>,
    #[serde(default)]
    pub alignment: RollingAlignment,
}

impl LagSpec {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.rolling, Some(w) if w < 2) {
            return Err(Error::invalid(format!(
                "rolling window for `{}` must be at least 2",
                self.column
            )));
        }
        Ok(())
    }

    pub fn apply(&self, table: &mut HourlyTable) -> Result<()> {
        self.validate()?;
        if self.lags > 0 {
            add_lags(table, &self.column, self.lags)?;
        }
        if let Some(w) = self.rolling {
            add_rolling_mean(table, &self.column, w, self.alignment)?;
        }
        Ok(())
    }
}

pub fn lag_column_name(column: &str, k: usize) -> String {
    format!("{column}_lag_{k}")
}

pub fn rolling_column_name(column: &str, window: usize) -> String {
    format!("{column}_roll_{window}")
}

/// Adds `column_lag_1 ..= column_lag_W`. A lag that would reach before the
/// first row or across a gap in the timestamps is left missing (NaN).
pub fn add_lags(table: &mut HourlyTable, column: &str, window: usize) -> Result<()> {
    if window == 0 {
        return Err(Error::invalid("lag window must be at least 1"));
    }
    if window >= table.len() {
        return Err(Error::invalid(format!(
            "lag window {window} is not shorter than the table ({} rows)",
            table.len()
        )));
    }
    let src = table.values(column)?.to_vec();
    let kind = table.column(column).expect("checked above").kind;
    for k in 1..=window {
        let values = (0..table.len())
            .map(|t| {
                if t >= k && table.is_contiguous(t - k, t) {
                    src[t - k]
                } else {
                    f64::NAN
                }
            })
            .collect();
        table.push_column(lag_column_name(column, k), kind, values)?;
    }
    Ok(())
}

/// Adds `column_roll_W`. Centered windows cover rows `t - W/2 ..= t - W/2 + W - 1`
/// (for even W the extra row is on the past side); incomplete or
/// gap-crossing windows are left missing.
pub fn add_rolling_mean(
    table: &mut HourlyTable,
    column: &str,
    window: usize,
    alignment: RollingAlignment,
) -> Result<()> {
    if window < 2 {
        return Err(Error::invalid("rolling window must be at least 2"));
    }
    if window > table.len() {
        return Err(Error::invalid(format!(
            "rolling window {window} exceeds table length {}",
            table.len()
        )));
    }
    if alignment == RollingAlignment::Centered {
        warn!(
            "centered rolling mean on `{column}` reads up to {} future hours; \
             this leaks information into forecasts (use trailing alignment for deployment)",
            window - 1 - window / 2
        );
    }
    let src = table.values(column)?.to_vec();
    let kind = table.column(column).expect("checked above").kind;
    let back = match alignment {
        RollingAlignment::Centered => window / 2,
        RollingAlignment::Trailing => window - 1,
    };
    let n = table.len();
    let values = (0..n)
        .map(|t| {
            if t < back || t - back + window > n {
                return f64::NAN;
            }
            let from = t - back;
            let to = from + window - 1;
            if !table.is_contiguous(from, to) {
                return f64::NAN;
            }
            src[from..=to].iter().sum::<f64>() / window as f64
        })
        .collect();
    table.push_column(rolling_column_name(column, window), kind, values)
}

/// Number of rows inside a closed hourly window.
pub fn hours_in_window(from: NaiveDateTime, to: NaiveDateTime) -> usize {
    ((to - from).num_hours() + 1).max(0) as usize
}

/// Distinct visit ids across a report's exclusions, for auditing.
pub fn excluded_ids(report: &CleaningReport) -> BTreeSet<&str> {
    report.excluded.iter().map(|(id, _)| id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;
    use crate::table::ColumnKind;
    use chrono::Duration;
    use proptest::prelude::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn base_visit(id: &str) -> VisitTimeline {
        let t0 = ts("2019-03-01 08:00:00");
        VisitTimeline {
            visit_id: id.into(),
            arrival_time: t0,
            waiting_start: Some(t0),
            waiting_end: Some(t0 + Duration::hours(1)),
            treatment_start: Some(t0 + Duration::hours(1)),
            treatment_end: Some(t0 + Duration::hours(5)),
            bed_request_time: Some(t0 + Duration::hours(5)),
            checkout_time: t0 + Duration::hours(10),
            esi: Some(Esi::Level(2)),
        }
    }

    fn shift_after_waiting(v: &mut VisitTimeline, d: Duration) {
        v.waiting_end = v.waiting_end.map(|t| t + d);
        v.treatment_start = v.treatment_start.map(|t| t + d);
        v.treatment_end = v.treatment_end.map(|t| t + d);
        v.bed_request_time = v.bed_request_time.map(|t| t + d);
        v.checkout_time += d;
    }

    #[test]
    fn waiting_threshold_is_strict() {
        let rules = CleaningRules::default();
        let mut v = base_visit("a");
        shift_after_waiting(&mut v, Duration::minutes(8 * 60 + 1)); // 9h01m waiting
        assert_eq!(violated_rule(&v, &rules), Some(CleaningRule::WaitingTooLong));
        let mut v = base_visit("b");
        shift_after_waiting(&mut v, Duration::hours(8)); // exactly 9h
        assert_eq!(violated_rule(&v, &rules), None);
    }

    #[test]
    fn boarding_just_under_limit_is_kept() {
        let mut v = base_visit("a");
        v.checkout_time = v.bed_request_time.unwrap() + Duration::hours(299);
        assert_eq!(violated_rule(&v, &CleaningRules::default()), None);
        v.checkout_time = v.bed_request_time.unwrap() + Duration::hours(301);
        assert_eq!(violated_rule(&v, &CleaningRules::default()), Some(CleaningRule::BoardingTooLong));
    }

    #[test]
    fn constructed_fixture_counts() {
        let mut visits: Vec<_> = (0..20).map(|i| base_visit(&format!("ok{i}"))).collect();
        for i in 0..2 {
            let mut v = base_visit(&format!("wait{i}"));
            shift_after_waiting(&mut v, Duration::hours(20));
            visits.push(v);
        }
        let mut v = base_visit("board");
        v.checkout_time = v.bed_request_time.unwrap() + Duration::hours(400);
        visits.push(v);
        for i in 0..2 {
            let mut v = base_visit(&format!("stuck{i}"));
            let d = Duration::hours(6000);
            v.treatment_end = v.treatment_end.map(|t| t + d);
            v.bed_request_time = None;
            v.checkout_time = v.treatment_end.unwrap();
            visits.push(v);
        }
        let (kept, report) = clean_visits(visits, &CleaningRules::default());
        assert_eq!(report.total_excluded(), 5);
        assert_eq!(report.waiting_excluded, 2);
        assert_eq!(report.boarding_excluded, 1);
        assert_eq!(report.stuck_treatment_excluded, 2);
        assert_eq!(kept.len(), 20);
        assert_eq!(report.excluded.len(), 5);
        assert!((report.waiting_excluded_fraction - 2.0 / 25.0).abs() < 1e-15);

        // idempotent
        let (again, r2) = clean_visits(kept.clone(), &CleaningRules::default());
        assert_eq!(again, kept);
        assert_eq!(r2.total_excluded(), 0);
    }

    #[test]
    fn esi_imputation() {
        let mut visits: Vec<_> = (0..20).map(|i| base_visit(&format!("v{i}"))).collect();
        visits[0].esi = Some(Esi::Level(1));
        visits[3].esi = None;
        visits[7].esi = None;
        visits[9].esi = Some(Esi::Obstetrics);
        let mut report = CleaningReport {
            input_visits: 20,
            kept_visits: 20,
            ..Default::default()
        };
        let n = impute_esi(&mut visits, &mut report);
        assert_eq!(n, 2); // 10% of 20
        assert_eq!(visits[3].esi, Some(Esi::Level(3)));
        assert_eq!(visits[0].esi, Some(Esi::Level(1)));
        assert_eq!(visits[9].esi, Some(Esi::Obstetrics));
        assert!((report.esi_imputed_fraction - 0.1).abs() < 1e-15);
        assert!(visits.iter().all(|v| v.esi.is_some()));
    }

    #[test]
    fn weather_grouping_is_total_and_surjective() {
        assert_eq!(group_weather(RawCondition::Mist), WeatherCategory::Clouds);
        assert_eq!(group_weather(RawCondition::Drizzle), WeatherCategory::Rain);
        assert_eq!(group_weather(RawCondition::Haze), WeatherCategory::Others);
        assert_eq!(group_weather(RawCondition::Clear), WeatherCategory::Clear);
        let image: BTreeSet<_> = RawCondition::ALL.into_iter().map(group_weather).collect();
        assert_eq!(image.len(), 5);
        assert!(group_weather_label("Tornado").is_err());
        assert_eq!(group_weather_label("Smoke").unwrap(), WeatherCategory::Others);
    }

    fn hourly(start: &str, values: &[f64]) -> HourlyTable {
        let t0 = ts(start);
        let mut t = HourlyTable::new((0..values.len()).map(|i| t0 + Duration::hours(i as i64)).collect());
        t.push_column("x", ColumnKind::Count, values.to_vec()).unwrap();
        t
    }

    #[test]
    fn exclusion_window_boundaries() {
        let t0 = ts("2020-03-31 00:00:00");
        let end = ts("2020-08-02 00:00:00");
        let n = (end - t0).num_hours() as usize + 1;
        let table = hourly("2020-03-31 00:00:00", &vec![1.0; n]);
        let (from, to) = covid_window();
        let out = exclude_window(&table, from, to);
        assert_eq!(out.len(), n - hours_in_window(from, to));
        assert!(!out.timestamps.contains(&ts("2020-05-15 12:00:00")));
        assert!(out.timestamps.contains(&ts("2020-08-01 00:00:00")));
        assert!(out.timestamps.contains(&ts("2020-03-31 23:00:00")));
        assert!(!out.timestamps.contains(&ts("2020-07-31 23:00:00")));
    }

    #[test]
    fn lags_shift_values() {
        let mut t = hourly("2020-01-01 00:00:00", &[5.0, 7.0, 9.0]);
        add_lags(&mut t, "x", 1).unwrap();
        let lag = t.values("x_lag_1").unwrap();
        assert!(lag[0].is_nan());
        assert_eq!(&lag[1..], &[5.0, 7.0]);
        assert!(add_lags(&mut t, "x", 3).is_err());
        assert!(matches!(add_lags(&mut t, "nope", 1), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn lags_do_not_cross_gaps() {
        let table = hourly("2020-03-31 20:00:00", &(0..10).map(f64::from).collect::<Vec<_>>());
        // drop rows 4 and 5 to open a gap
        let mut t = table.retain_rows(|i, _| i != 4 && i != 5);
        add_lags(&mut t, "x", 2).unwrap();
        let l1 = t.values("x_lag_1").unwrap();
        let l2 = t.values("x_lag_2").unwrap();
        // row 4 in the new table is old row 6: previous old rows 5, 4 missing
        assert!(l1[4].is_nan() && l2[4].is_nan());
        assert_eq!(l1[5], 6.0);
        assert!(l2[5].is_nan());
        assert_eq!(l2[6], 6.0);
    }

    #[test]
    fn centered_and_trailing_rolling() {
        let mut t = hourly("2020-01-01 00:00:00", &[1.0, 2.0, 3.0, 4.0]);
        add_rolling_mean(&mut t, "x", 3, RollingAlignment::Centered).unwrap();
        let r = t.values("x_roll_3").unwrap();
        assert!(r[0].is_nan() && r[3].is_nan());
        assert_eq!(r[1], 2.0);
        add_rolling_mean(&mut t, "x", 2, RollingAlignment::Trailing).unwrap();
        let r = t.values("x_roll_2").unwrap();
        assert!(r[0].is_nan());
        assert_eq!(&r[1..], &[1.5, 2.5, 3.5]);
        assert!(add_rolling_mean(&mut t, "x", 5, RollingAlignment::Trailing).is_err());

        let mut c = hourly("2020-01-01 00:00:00", &[4.2; 9]);
        add_rolling_mean(&mut c, "x", 4, RollingAlignment::Centered).unwrap();
        assert!(c.values("x_roll_4").unwrap().iter().filter(|v| !v.is_nan()).all(|&v| (v - 4.2).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn lag_reads_exact_past_value(values in prop::collection::vec(-100.0f64..100.0, 30..80), k in 1usize..12) {
            let mut t = hourly("2021-01-01 00:00:00", &values);
            add_lags(&mut t, "x", k).unwrap();
            let lag = t.values(&lag_column_name("x", k)).unwrap();
            for i in 0..values.len() {
                if i >= k { prop_assert_eq!(lag[i], values[i - k]); } else { prop_assert!(lag[i].is_nan()); }
            }
        }

        #[test]
        fn rolling_matches_window_average(values in prop::collection::vec(-100.0f64..100.0, 12..60), w in 2usize..8, centered in any::<bool>()) {
            let align = if centered { RollingAlignment::Centered } else { RollingAlignment::Trailing };
            let mut t = hourly("2021-01-01 00:00:00", &values);
            add_rolling_mean(&mut t, "x", w, align).unwrap();
            let r = t.values(&rolling_column_name("x", w)).unwrap();
            let n = values.len() as i64;
            for i in 0..n {
                let from = if centered { i - (w as i64) / 2 } else { i - w as i64 + 1 };
                let to = from + w as i64 - 1;
                if from < 0 || to >= n {
                    prop_assert!(r[i as usize].is_nan());
                } else {
                    let mut acc = 0.0;
                    for j in from..=to { acc += values[j as usize]; }
                    prop_assert!((r[i as usize] - acc / w as f64).abs() < 1e-9);
                }
            }
        }
    }
}
