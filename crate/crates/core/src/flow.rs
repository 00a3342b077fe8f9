//! Hourly patient-flow metrics.
//!
//! All counts are top-of-hour snapshots: a visit is counted at hour `h` when
//! its phase interval `[start, end)` contains the instant `h`. Counts and
//! elapsed-time averages are computed with a start/end event sweep over the
//! sorted hour index.

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CalendarFlags, Esi, HourIndex, InpatientStay, VisitTimeline, WeatherObservation};
use crate::preprocess::{group_weather, WeatherCategory};
use crate::table::{column_kind, ColumnKind, HourlyTable, HOURLY_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Boarding,
    Waiting,
    Treatment,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Boarding, Phase::Waiting, Phase::Treatment];
}

/// Acuity groups used to break down boarding and waiting counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EsiGroup {
    G12,
    G3,
    G45,
}

impl EsiGroup {
    pub const ALL: [EsiGroup; 3] = [EsiGroup::G12, EsiGroup::G3, EsiGroup::G45];

    /// Obstetrics and unrecorded acuity fall into the ESI 3 group.
    pub fn of(esi: Option<Esi>) -> EsiGroup {
        match esi {
            Some(Esi::Level(1 | 2)) => EsiGroup::G12,
            Some(Esi::Level(4 | 5)) => EsiGroup::G45,
            _ => EsiGroup::G3,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            EsiGroup::G12 => "esi12",
            EsiGroup::G3 => "esi3",
            EsiGroup::G45 => "esi45",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        self.start <= t && t < self.end
    }
}

pub fn phase_interval(visit: &VisitTimeline, phase: Phase) -> Option<Interval> {
    let (start, end) = match phase {
        Phase::Boarding => (visit.bed_request_time?, visit.checkout_time),
        Phase::Waiting => (visit.waiting_start?, visit.waiting_end?),
        Phase::Treatment => (visit.treatment_start?, visit.treatment_end?),
    };
    Some(Interval { start, end })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Count,
    Minutes,
    Binary,
}

/// One value per entry of the hour index it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub name: String,
    pub units: Units,
    pub values: Vec<f64>,
}

fn secs(t: NaiveDateTime) -> i64 {
    t.and_utc().timestamp()
}

/// Snapshot occupancy and summed start times per hour for a set of
/// half-open intervals.
fn sweep(intervals: &[Interval], hours: &[NaiveDateTime]) -> (Vec<u32>, Vec<i128>) {
    let mut starts: Vec<i64> = Vec::with_capacity(intervals.len());
    // (end, start) so each removal knows which start it cancels.
    let mut ends: Vec<(i64, i64)> = Vec::with_capacity(intervals.len());
    for iv in intervals.iter().filter(|iv| !iv.is_empty()) {
        starts.push(secs(iv.start));
        ends.push((secs(iv.end), secs(iv.start)));
    }
    starts.sort_unstable();
    ends.sort_unstable();

    let mut counts = Vec::with_capacity(hours.len());
    let mut start_sums = Vec::with_capacity(hours.len());
    let (mut si, mut ei) = (0usize, 0usize);
    let mut active: i64 = 0;
    let mut sum: i128 = 0;
    for &h in hours {
        let h = secs(h);
        while si < starts.len() && starts[si] <= h {
            active += 1;
            sum += starts[si] as i128;
            si += 1;
        }
        while ei < ends.len() && ends[ei].0 <= h {
            active -= 1;
            sum -= ends[ei].1 as i128;
            ei += 1;
        }
        counts.push(active as u32);
        start_sums.push(sum);
    }
    (counts, start_sums)
}

fn phase_intervals(visits: &[VisitTimeline], phase: Phase, esi_filter: Option<EsiGroup>) -> Vec<Interval> {
    visits
        .iter()
        .filter(|v| esi_filter.is_none_or(|g| EsiGroup::of(v.esi) == g))
        .filter_map(|v| phase_interval(v, phase))
        .collect()
}

fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Boarding => "boarding",
        Phase::Waiting => "waiting",
        Phase::Treatment => "treatment",
    }
}

pub fn hourly_phase_count(
    visits: &[VisitTimeline],
    phase: Phase,
    hour_index: &HourIndex,
    esi_filter: Option<EsiGroup>,
) -> HourlySeries {
    let intervals = phase_intervals(visits, phase, esi_filter);
    let (counts, _) = sweep(&intervals, &hour_index.hours);
    let name = match esi_filter {
        None => format!("{}_count", phase_name(phase)),
        Some(g) => format!("{}_count_{}", phase_name(phase), g.suffix()),
    };
    HourlySeries {
        name,
        units: Units::Count,
        values: counts.into_iter().map(f64::from).collect(),
    }
}

/// Mean minutes elapsed since phase start over the visits in phase at each
/// hour; 0 when nobody is in phase.
pub fn hourly_avg_elapsed(visits: &[VisitTimeline], phase: Phase, hour_index: &HourIndex) -> HourlySeries {
    let intervals = phase_intervals(visits, phase, None);
    let (counts, start_sums) = sweep(&intervals, &hour_index.hours);
    let values = hour_index
        .hours
        .iter()
        .zip(counts.iter().zip(&start_sums))
        .map(|(&h, (&n, &sum))| {
            if n == 0 {
                0.0
            } else {
                let elapsed = n as i128 * secs(h) as i128 - sum;
                elapsed as f64 / 60.0 / n as f64
            }
        })
        .collect();
    HourlySeries {
        name: format!("avg_{}_time", phase_name(phase)),
        units: Units::Minutes,
        values,
    }
}

/// Admitted patients present hospital-wide at each hour
/// (`arrival <= h < discharge`).
pub fn hourly_census(stays: &[InpatientStay], hour_index: &HourIndex) -> HourlySeries {
    let intervals: Vec<Interval> = stays
        .iter()
        .map(|s| Interval {
            start: s.arrival,
            end: s.discharge,
        })
        .collect();
    let (counts, _) = sweep(&intervals, &hour_index.hours);
    HourlySeries {
        name: "hospital_census".into(),
        units: Units::Count,
        values: counts.into_iter().map(f64::from).collect(),
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Flags values strictly above mean + one population standard deviation of
/// the whole series.
pub fn extreme_indicator(series: &HourlySeries) -> Result<HourlySeries> {
    if series.values.is_empty() {
        return Err(Error::invalid("extreme indicator of an empty series"));
    }
    let (mean, std) = mean_std(&series.values);
    let cut = mean + std;
    Ok(HourlySeries {
        name: "extreme_indicator".into(),
        units: Units::Binary,
        values: series
            .values
            .iter()
            .map(|&v| if v > cut { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// All series derived from the ED log and the inpatient census.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMetrics {
    pub series: Vec<HourlySeries>,
}

impl FlowMetrics {
    pub fn get(&self, name: &str) -> Option<&HourlySeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

pub fn compute_flow_metrics(
    visits: &[VisitTimeline],
    stays: &[InpatientStay],
    hour_index: &HourIndex,
) -> Result<FlowMetrics> {
    let mut series = Vec::new();
    let boarding = hourly_phase_count(visits, Phase::Boarding, hour_index, None);
    series.push(boarding.clone());
    for g in EsiGroup::ALL {
        series.push(hourly_phase_count(visits, Phase::Boarding, hour_index, Some(g)));
    }
    series.push(hourly_avg_elapsed(visits, Phase::Boarding, hour_index));
    series.push(hourly_phase_count(visits, Phase::Waiting, hour_index, None));
    for g in EsiGroup::ALL {
        series.push(hourly_phase_count(visits, Phase::Waiting, hour_index, Some(g)));
    }
    series.push(hourly_avg_elapsed(visits, Phase::Waiting, hour_index));
    series.push(hourly_phase_count(visits, Phase::Treatment, hour_index, None));
    series.push(hourly_avg_elapsed(visits, Phase::Treatment, hour_index));
    series.push(extreme_indicator(&boarding)?);
    series.push(hourly_census(stays, hour_index));
    Ok(FlowMetrics { series })
}

/// Joins flow metrics, weather and calendar flags into one row per hour.
///
/// Weather hours missing from the feed carry the previous observation
/// forward; hours before the first observation take the first one.
pub fn assemble_hourly_records(
    flow: &FlowMetrics,
    weather: &[WeatherObservation],
    calendar: &CalendarFlags,
    hour_index: &HourIndex,
) -> Result<HourlyTable> {
    let n = hour_index.len();
    for s in &flow.series {
        if s.values.len() != n {
            return Err(Error::shape(format!(
                "series `{}` has {} values, hour index has {n}",
                s.name,
                s.values.len()
            )));
        }
    }
    if weather.is_empty() && n > 0 {
        return Err(Error::Degenerate("no weather observations".into()));
    }

    let hours = &hour_index.hours;
    let mut cols: Vec<(&str, Vec<f64>)> = Vec::new();
    cols.push(("year", hours.iter().map(|h| h.year() as f64).collect()));
    cols.push(("month", hours.iter().map(|h| h.month() as f64).collect()));
    cols.push(("day_of_month", hours.iter().map(|h| h.day() as f64).collect()));
    // Monday = 0 .. Sunday = 6
    cols.push((
        "day_of_week",
        hours
            .iter()
            .map(|h| h.weekday().num_days_from_monday() as f64)
            .collect(),
    ));
    cols.push(("hour", hours.iter().map(|h| chrono::Timelike::hour(h) as f64).collect()));

    let mut temperature = Vec::with_capacity(n);
    let mut category = Vec::with_capacity(n);
    let mut wi = 0usize;
    for &h in hours {
        while wi + 1 < weather.len() && weather[wi + 1].hour <= h {
            wi += 1;
        }
        let obs = &weather[wi];
        temperature.push(obs.temperature_f);
        category.push(group_weather(obs.condition_raw));
    }

    for name in HOURLY_COLUMNS {
        if let Some(s) = flow.get(name) {
            cols.push((name, s.values.clone()));
        }
    }
    cols.push(("temperature", temperature));
    for (name, cat) in [
        ("weather_clear", WeatherCategory::Clear),
        ("weather_clouds", WeatherCategory::Clouds),
        ("weather_rain", WeatherCategory::Rain),
        ("weather_thunderstorm", WeatherCategory::Thunderstorm),
        ("weather_others", WeatherCategory::Others),
    ] {
        cols.push((name, category.iter().map(|&c| f64::from(c == cat)).collect()));
    }
    cols.push(("federal_holiday", hours.iter().map(|&h| f64::from(calendar.is_holiday(h))).collect()));
    cols.push(("football_game1", hours.iter().map(|&h| f64::from(calendar.is_game1(h))).collect()));
    cols.push(("football_game2", hours.iter().map(|&h| f64::from(calendar.is_game2(h))).collect()));

    let mut table = HourlyTable::new(hours.clone());
    for name in HOURLY_COLUMNS {
        let (_, values) = cols
            .iter()
            .find(|(c, _)| *c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        let kind = column_kind(name).unwrap_or(ColumnKind::Continuous);
        table.push_column(name, kind, values.clone())?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_hour_index, parse_timestamp, RawCondition};
    use chrono::Duration;
    use proptest::prelude::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn visit(id: &str, arrival: NaiveDateTime, bed: Option<NaiveDateTime>, checkout: NaiveDateTime) -> VisitTimeline {
        VisitTimeline {
            visit_id: id.into(),
            arrival_time: arrival,
            waiting_start: None,
            waiting_end: None,
            treatment_start: None,
            treatment_end: None,
            bed_request_time: bed,
            checkout_time: checkout,
            esi: Some(Esi::Level(3)),
        }
    }

    fn day_index() -> HourIndex {
        build_hour_index(ts("2019-01-01 00:00:00"), ts("2019-01-01 23:00:00")).unwrap()
    }

    #[test]
    fn boarding_interval_and_counts() {
        let v = visit(
            "a",
            ts("2019-01-01 09:00:00"),
            Some(ts("2019-01-01 14:00:00")),
            ts("2019-01-01 20:00:00"),
        );
        let iv = phase_interval(&v, Phase::Boarding).unwrap();
        assert_eq!(iv.start, ts("2019-01-01 14:00:00"));
        assert_eq!(iv.end, ts("2019-01-01 20:00:00"));
        let s = hourly_phase_count(&[v], Phase::Boarding, &day_index(), None);
        for (h, &c) in s.values.iter().enumerate() {
            assert_eq!(c, if (14..20).contains(&h) { 1.0 } else { 0.0 }, "hour {h}");
        }
    }

    #[test]
    fn absent_and_empty_intervals() {
        let mut v = visit("a", ts("2019-01-01 09:00:00"), None, ts("2019-01-01 20:00:00"));
        assert!(phase_interval(&v, Phase::Boarding).is_none());
        v.waiting_start = Some(ts("2019-01-01 10:00:00"));
        v.waiting_end = Some(ts("2019-01-01 10:00:00"));
        let iv = phase_interval(&v, Phase::Waiting).unwrap();
        assert!(iv.is_empty());
        let s = hourly_phase_count(&[v], Phase::Waiting, &day_index(), None);
        assert!(s.values.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn elapsed_average() {
        let v = visit(
            "a",
            ts("2019-01-01 09:00:00"),
            Some(ts("2019-01-01 14:00:00")),
            ts("2019-01-01 20:00:00"),
        );
        let s = hourly_avg_elapsed(&[v], Phase::Boarding, &day_index());
        assert_eq!(s.values[16], 120.0);
        assert_eq!(s.values[3], 0.0);
        assert_eq!(s.units, Units::Minutes);
    }

    #[test]
    fn census_counts_snapshots() {
        let idx = build_hour_index(ts("2019-01-31 00:00:00"), ts("2019-02-05 00:00:00")).unwrap();
        let stay = InpatientStay {
            visit_id: "s".into(),
            arrival: ts("2019-02-01 10:00:00"),
            discharge: ts("2019-02-03 11:00:00"),
        };
        let s = hourly_census(std::slice::from_ref(&stay), &idx);
        // oracle: membership test per hour
        let brute = idx
            .hours
            .iter()
            .filter(|&&h| stay.arrival <= h && h < stay.discharge)
            .count();
        assert_eq!(brute, 49);
        assert_eq!(s.values.iter().sum::<f64>(), 49.0);
        assert!(hourly_census(&[], &idx).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extreme_indicator_is_strict() {
        // mean 10, population std 2
        let series = HourlySeries {
            name: "x".into(),
            units: Units::Count,
            values: vec![8.0, 12.0, 8.0, 12.0],
        };
        let flags = extreme_indicator(&series).unwrap();
        assert!(flags.values.iter().all(|&f| f == 0.0), "12 == mean + std is not extreme");
        let mut s2 = series.clone();
        s2.values = vec![10.0, 10.0, 10.0, 10.0];
        assert!(extreme_indicator(&s2).unwrap().values.iter().all(|&f| f == 0.0));
        s2.values = vec![];
        assert!(extreme_indicator(&s2).is_err());

        let mut s3 = series.clone();
        s3.values = vec![7.0, 13.0, 9.0, 11.0];
        let (m, sd) = mean_std(&s3.values);
        assert_eq!(m, 10.0);
        assert!((sd - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(extreme_indicator(&s3).unwrap().values, vec![0.0, 1.0, 0.0, 0.0]);
    }

    fn weather_at(h: &str, c: RawCondition, t: f64) -> WeatherObservation {
        WeatherObservation {
            hour: ts(h),
            condition_raw: c,
            temperature_f: t,
        }
    }

    #[test]
    fn assembly_calendar_and_weather_fill() {
        let idx = build_hour_index(ts("2023-05-10 12:00:00"), ts("2023-05-10 15:00:00")).unwrap();
        let flow = compute_flow_metrics(&[], &[], &idx).unwrap();
        let weather = vec![
            weather_at("2023-05-10 12:00:00", RawCondition::Mist, 60.0),
            weather_at("2023-05-10 14:00:00", RawCondition::Drizzle, 58.0),
        ];
        let mut cal = CalendarFlags::default();
        cal.game2_dates.insert(ts("2023-05-10 00:00:00").date());
        let t = assemble_hourly_records(&flow, &weather, &cal, &idx).unwrap();
        assert_eq!(t.len(), 4);
        let names: Vec<_> = t.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, HOURLY_COLUMNS.to_vec());
        assert_eq!(t.values("hour").unwrap()[1], 13.0);
        assert_eq!(t.values("day_of_week").unwrap()[1], 2.0); // Wednesday
        assert_eq!(t.values("temperature").unwrap(), &[60.0, 60.0, 58.0, 58.0]);
        assert_eq!(t.values("weather_clouds").unwrap(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.values("weather_rain").unwrap(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(t.values("football_game2").unwrap(), &[1.0; 4]);
        assert_eq!(t.values("federal_holiday").unwrap(), &[0.0; 4]);
    }

    #[test]
    fn assembly_rejects_misaligned_series() {
        let idx = day_index();
        let mut flow = compute_flow_metrics(&[], &[], &idx).unwrap();
        flow.series[0].values.pop();
        let w = vec![weather_at("2019-01-01 00:00:00", RawCondition::Clear, 30.0)];
        assert!(assemble_hourly_records(&flow, &w, &CalendarFlags::default(), &idx).is_err());
    }

    // Brute-force oracle: test every (visit, hour) pair directly.
    fn brute_count(visits: &[VisitTimeline], phase: Phase, hours: &[NaiveDateTime], g: Option<EsiGroup>) -> Vec<f64> {
        hours
            .iter()
            .map(|&h| {
                visits
                    .iter()
                    .filter(|v| g.is_none_or(|g| EsiGroup::of(v.esi) == g))
                    .filter(|v| phase_interval(v, phase).is_some_and(|iv| iv.start <= h && h < iv.end))
                    .count() as f64
            })
            .collect()
    }

    fn brute_elapsed(visits: &[VisitTimeline], phase: Phase, hours: &[NaiveDateTime]) -> Vec<f64> {
        hours
            .iter()
            .map(|&h| {
                let e: Vec<f64> = visits
                    .iter()
                    .filter_map(|v| phase_interval(v, phase))
                    .filter(|iv| iv.start <= h && h < iv.end)
                    .map(|iv| (h - iv.start).num_seconds() as f64 / 60.0)
                    .collect();
                if e.is_empty() {
                    0.0
                } else {
                    e.iter().sum::<f64>() / e.len() as f64
                }
            })
            .collect()
    }

    fn arb_visit(span_minutes: i64) -> impl Strategy<Value = VisitTimeline> {
        (
            0..span_minutes,
            prop::collection::vec(0i64..600, 6),
            prop::collection::vec(any::<bool>(), 3),
            0u8..7,
        )
            .prop_map(|(start, gaps, present, esi)| {
                let t0 = ts("2019-01-01 00:00:00") + Duration::minutes(start);
                let mut t = t0;
                let mut next = |i: usize| {
                    t += Duration::minutes(gaps[i]);
                    t
                };
                let ws = next(0);
                let we = next(1);
                let tsn = next(2);
                let te = next(3);
                let bed = next(4);
                let co = next(5);
                VisitTimeline {
                    visit_id: "v".into(),
                    arrival_time: t0,
                    waiting_start: present[0].then_some(ws),
                    waiting_end: present[0].then_some(we),
                    treatment_start: present[1].then_some(tsn),
                    treatment_end: present[1].then_some(te),
                    bed_request_time: present[2].then_some(bed),
                    checkout_time: co,
                    esi: match esi {
                        0 => None,
                        6 => Some(Esi::Obstetrics),
                        l => Esi::level(l),
                    },
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sweep_matches_brute_force(visits in prop::collection::vec(arb_visit(60 * 200), 0..120)) {
            let idx = build_hour_index(ts("2019-01-01 00:00:00"), ts("2019-01-10 00:00:00")).unwrap();
            for phase in Phase::ALL {
                let total = hourly_phase_count(&visits, phase, &idx, None);
                prop_assert_eq!(&total.values, &brute_count(&visits, phase, &idx.hours, None));
                let mut sum = vec![0.0; idx.len()];
                for g in EsiGroup::ALL {
                    let s = hourly_phase_count(&visits, phase, &idx, Some(g));
                    prop_assert_eq!(&s.values, &brute_count(&visits, phase, &idx.hours, Some(g)));
                    for (a, b) in sum.iter_mut().zip(&s.values) { *a += b; }
                }
                prop_assert_eq!(&sum, &total.values);
                let avg = hourly_avg_elapsed(&visits, phase, &idx);
                for (a, b) in avg.values.iter().zip(brute_elapsed(&visits, phase, &idx.hours)) {
                    prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
                    prop_assert!(*a >= 0.0);
                }
            }
        }

        #[test]
        fn adding_a_visit_never_decreases_counts(
            visits in prop::collection::vec(arb_visit(60 * 100), 0..60),
            extra in arb_visit(60 * 100),
        ) {
            let idx = build_hour_index(ts("2019-01-01 00:00:00"), ts("2019-01-06 00:00:00")).unwrap();
            let mut more = visits.clone();
            more.push(extra);
            for phase in Phase::ALL {
                let a = hourly_phase_count(&visits, phase, &idx, None);
                let b = hourly_phase_count(&more, phase, &idx, None);
                prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x <= y));
            }
        }
    }
}
