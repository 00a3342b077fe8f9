//! Parsing of the five source tables and the hourly timeline.
//!
//! Every parser is total over its input rows: a row either becomes a
//! record or shows up in the rejection list with a machine-readable reason,
//! so `records.len() + rejected.len() == rows` always holds. Only an
//! unreadable stream or a missing header column is fatal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub const ED_TRACKING_HEADER: [&str; 9] = [
    "visit_id",
    "arrival",
    "waiting_start",
    "waiting_end",
    "treatment_start",
    "treatment_end",
    "bed_request",
    "checkout",
    "esi",
];
pub const INPATIENT_HEADER: [&str; 3] = ["visit_id", "arrival", "discharge"];
pub const WEATHER_HEADER: [&str; 3] = ["hour", "condition", "temperature_f"];
pub const DATE_HEADER: [&str; 1] = ["date"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn truncate_to_hour(t: NaiveDateTime) -> NaiveDateTime {
    t.with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("zero is a valid minute/second")
}

pub fn is_hour_aligned(t: NaiveDateTime) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// Emergency Severity Index as recorded at triage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Esi {
    Level(u8),
    /// Obstetrics cases are triaged outside the 1-5 scale.
    Obstetrics,
}

impl Esi {
    pub const OBSTETRICS_MARKER: &'static str = "OB";

    pub fn level(level: u8) -> Option<Esi> {
        (1..=5).contains(&level).then_some(Esi::Level(level))
    }
}

impl FromStr for Esi {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let s = s.trim();
        if s.eq_ignore_ascii_case(Self::OBSTETRICS_MARKER) {
            return Ok(Esi::Obstetrics);
        }
        s.parse::<u8>().ok().and_then(Esi::level).ok_or(())
    }
}

impl fmt::Display for Esi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Esi::Level(l) => write!(f, "{l}"),
            Esi::Obstetrics => f.write_str(Self::OBSTETRICS_MARKER),
        }
    }
}

/// Milestones of one ED visit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitTimeline {
    pub visit_id: String,
    pub arrival_time: NaiveDateTime,
    pub waiting_start: Option<NaiveDateTime>,
    pub waiting_end: Option<NaiveDateTime>,
    pub treatment_start: Option<NaiveDateTime>,
    pub treatment_end: Option<NaiveDateTime>,
    /// Admit Bed Request; start of boarding.
    pub bed_request_time: Option<NaiveDateTime>,
    pub checkout_time: NaiveDateTime,
    pub esi: Option<Esi>,
}

impl VisitTimeline {
    /// Present milestones in their required chronological order.
    pub fn milestones(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        [
            Some(self.arrival_time),
            self.waiting_start,
            self.waiting_end,
            self.treatment_start,
            self.treatment_end,
            self.bed_request_time,
            Some(self.checkout_time),
        ]
        .into_iter()
        .flatten()
    }

    pub fn is_monotonic(&self) -> bool {
        let mut it = self.milestones();
        let mut prev = it.next().expect("arrival is always present");
        for t in it {
            if t < prev {
                return false;
            }
            prev = t;
        }
        true
    }
}

/// Hospital-wide inpatient stay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InpatientStay {
    pub visit_id: String,
    pub arrival: NaiveDateTime,
    pub discharge: NaiveDateTime,
}

/// Raw weather condition labels as delivered by the weather feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RawCondition {
    Clouds,
    Clear,
    Rain,
    Mist,
    Thunderstorm,
    Drizzle,
    Fog,
    Haze,
    Snow,
    Smoke,
}

impl RawCondition {
    pub const ALL: [RawCondition; 10] = [
        RawCondition::Clouds,
        RawCondition::Clear,
        RawCondition::Rain,
        RawCondition::Mist,
        RawCondition::Thunderstorm,
        RawCondition::Drizzle,
        RawCondition::Fog,
        RawCondition::Haze,
        RawCondition::Snow,
        RawCondition::Smoke,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RawCondition::Clouds => "Clouds",
            RawCondition::Clear => "Clear",
            RawCondition::Rain => "Rain",
            RawCondition::Mist => "Mist",
            RawCondition::Thunderstorm => "Thunderstorm",
            RawCondition::Drizzle => "Drizzle",
            RawCondition::Fog => "Fog",
            RawCondition::Haze => "Haze",
            RawCondition::Snow => "Snow",
            RawCondition::Smoke => "Smoke",
        }
    }
}

impl FromStr for RawCondition {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let s = s.trim();
        RawCondition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherObservation {
    pub hour: NaiveDateTime,
    pub condition_raw: RawCondition,
    pub temperature_f: f64,
}

/// Whole-day flags from the holiday and event calendars.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFlags {
    pub holiday_dates: BTreeSet<NaiveDate>,
    pub game1_dates: BTreeSet<NaiveDate>,
    pub game2_dates: BTreeSet<NaiveDate>,
}

impl CalendarFlags {
    pub fn is_holiday(&self, t: NaiveDateTime) -> bool {
        self.holiday_dates.contains(&t.date())
    }

    pub fn is_game1(&self, t: NaiveDateTime) -> bool {
        self.game1_dates.contains(&t.date())
    }

    pub fn is_game2(&self, t: NaiveDateTime) -> bool {
        self.game2_dates.contains(&t.date())
    }
}

/// Why a source row was not converted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    WrongFieldCount,
    InvalidUtf8,
    MissingField,
    BadTimestamp,
    NonMonotonicTimestamps,
    BadEsi,
    UnknownCondition,
    BadNumber,
    BadDate,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::WrongFieldCount => "wrong_field_count",
            RejectReason::InvalidUtf8 => "invalid_utf8",
            RejectReason::MissingField => "missing_field",
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::NonMonotonicTimestamps => "non_monotonic_timestamps",
            RejectReason::BadEsi => "bad_esi",
            RejectReason::UnknownCondition => "unknown_condition",
            RejectReason::BadNumber => "bad_number",
            RejectReason::BadDate => "bad_date",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: RejectReason,
    pub detail: String,
}

/// Converted records plus the rows that were turned away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejected: Vec<RejectedRow>,
    pub rows: usize,
}

impl<T> Parsed<T> {
    fn empty() -> Self {
        Parsed {
            records: Vec::new(),
            rejected: Vec::new(),
            rows: 0,
        }
    }

    /// Rejection counts keyed by reason code.
    pub fn rejection_counts(&self) -> BTreeMap<RejectReason, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rejected {
            *out.entry(r.reason).or_insert(0) += 1;
        }
        out
    }
}

struct RowError(RejectReason, String);

type RowResult<T> = std::result::Result<T, RowError>;

/// Reads a headered CSV stream and hands each row, as string fields in
/// `header` order, to `convert`.
fn parse_table<R, T, F>(source: R, header: &[&str], mut convert: F) -> Result<Parsed<T>>
where
    R: Read,
    F: FnMut(&[&str]) -> RowResult<T>,
{
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let found = reader.byte_headers()?.clone();
    if found.is_empty() {
        // No header line at all: an empty file.
        return Ok(Parsed::empty());
    }
    let positions = header
        .iter()
        .map(|name| {
            found
                .iter()
                .position(|h| h.trim_ascii() == name.as_bytes())
                .ok_or_else(|| Error::MissingColumn((*name).to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Parsed::empty();
    let mut record = csv::ByteRecord::new();
    while reader.read_byte_record(&mut record)? {
        out.rows += 1;
        let row = out.rows;
        let result = (|| {
            if record.len() != found.len() {
                return Err(RowError(
                    RejectReason::WrongFieldCount,
                    format!("expected {} fields, found {}", found.len(), record.len()),
                ));
            }
            let mut fields = Vec::with_capacity(positions.len());
            for &p in &positions {
                let raw = record.get(p).unwrap_or_default();
                let s = std::str::from_utf8(raw).map_err(|e| {
                    RowError(RejectReason::InvalidUtf8, e.to_string())
                })?;
                fields.push(s);
            }
            convert(&fields)
        })();
        match result {
            Ok(rec) => out.records.push(rec),
            Err(RowError(reason, detail)) => out.rejected.push(RejectedRow {
                row,
                reason,
                detail,
            }),
        }
    }
    Ok(out)
}

fn required_ts(field: &str, name: &str) -> RowResult<NaiveDateTime> {
    if field.trim().is_empty() {
        return Err(RowError(RejectReason::MissingField, format!("{name} is empty")));
    }
    parse_timestamp(field).ok_or_else(|| {
        RowError(RejectReason::BadTimestamp, format!("{name}: `{field}`"))
    })
}

fn optional_ts(field: &str, name: &str) -> RowResult<Option<NaiveDateTime>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        required_ts(field, name).map(Some)
    }
}

fn required_id(field: &str) -> RowResult<String> {
    let id = field.trim();
    if id.is_empty() {
        Err(RowError(RejectReason::MissingField, "visit_id is empty".into()))
    } else {
        Ok(id.to_string())
    }
}

pub fn parse_ed_tracking<R: Read>(source: R) -> Result<Parsed<VisitTimeline>> {
    parse_table(source, &ED_TRACKING_HEADER, |f| {
        let esi = match f[8].trim() {
            "" => None,
            s => Some(s.parse::<Esi>().map_err(|_| {
                RowError(RejectReason::BadEsi, format!("esi `{s}`"))
            })?),
        };
        let visit = VisitTimeline {
            visit_id: required_id(f[0])?,
            arrival_time: required_ts(f[1], "arrival")?,
            waiting_start: optional_ts(f[2], "waiting_start")?,
            waiting_end: optional_ts(f[3], "waiting_end")?,
            treatment_start: optional_ts(f[4], "treatment_start")?,
            treatment_end: optional_ts(f[5], "treatment_end")?,
            bed_request_time: optional_ts(f[6], "bed_request")?,
            checkout_time: required_ts(f[7], "checkout")?,
            esi,
        };
        if !visit.is_monotonic() {
            return Err(RowError(
                RejectReason::NonMonotonicTimestamps,
                format!("visit {}", visit.visit_id),
            ));
        }
        Ok(visit)
    })
}

pub fn parse_inpatient<R: Read>(source: R) -> Result<Parsed<InpatientStay>> {
    parse_table(source, &INPATIENT_HEADER, |f| {
        let stay = InpatientStay {
            visit_id: required_id(f[0])?,
            arrival: required_ts(f[1], "arrival")?,
            discharge: required_ts(f[2], "discharge")?,
        };
        if stay.discharge < stay.arrival {
            return Err(RowError(
                RejectReason::NonMonotonicTimestamps,
                format!("stay {} discharged before arrival", stay.visit_id),
            ));
        }
        Ok(stay)
    })
}

/// Parses hourly weather. Output is sorted by hour; when an hour appears
/// more than once the later row replaces the earlier one.
pub fn parse_weather<R: Read>(source: R) -> Result<Parsed<WeatherObservation>> {
    let mut parsed = parse_table(source, &WEATHER_HEADER, |f| {
        let hour = truncate_to_hour(required_ts(f[0], "hour")?);
        let condition_raw = f[1].parse::<RawCondition>().map_err(|_| {
            RowError(
                RejectReason::UnknownCondition,
                format!("condition `{}`", f[1].trim()),
            )
        })?;
        let temperature_f = f[2]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| t.is_finite())
            .ok_or_else(|| {
                RowError(RejectReason::BadNumber, format!("temperature `{}`", f[2]))
            })?;
        Ok(WeatherObservation {
            hour,
            condition_raw,
            temperature_f,
        })
    })?;
    let mut by_hour = BTreeMap::new();
    for obs in parsed.records.drain(..) {
        by_hour.insert(obs.hour, obs);
    }
    parsed.records = by_hour.into_values().collect();
    Ok(parsed)
}

pub fn parse_dates<R: Read>(source: R) -> Result<Parsed<NaiveDate>> {
    parse_table(source, &DATE_HEADER, |f| {
        NaiveDate::parse_from_str(f[0].trim(), DATE_FORMAT)
            .map_err(|_| RowError(RejectReason::BadDate, format!("date `{}`", f[0])))
    })
}

/// Rejected rows of the three calendar sources.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarRejects {
    pub holidays: Vec<RejectedRow>,
    pub game1: Vec<RejectedRow>,
    pub game2: Vec<RejectedRow>,
}

pub fn parse_calendar<A: Read, B: Read, C: Read>(
    holidays: A,
    game1: B,
    game2: C,
) -> Result<(CalendarFlags, CalendarRejects)> {
    let h = parse_dates(holidays)?;
    let g1 = parse_dates(game1)?;
    let g2 = parse_dates(game2)?;
    let flags = CalendarFlags {
        holiday_dates: h.records.into_iter().collect(),
        game1_dates: g1.records.into_iter().collect(),
        game2_dates: g2.records.into_iter().collect(),
    };
    let rejects = CalendarRejects {
        holidays: h.rejected,
        game1: g1.rejected,
        game2: g2.rejected,
    };
    Ok((flags, rejects))
}

fn opt_ts(t: Option<NaiveDateTime>) -> String {
    t.map(format_timestamp).unwrap_or_default()
}

pub fn write_ed_tracking<W: Write>(visits: &[VisitTimeline], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(ED_TRACKING_HEADER)?;
    for v in visits {
        w.write_record([
            v.visit_id.clone(),
            format_timestamp(v.arrival_time),
            opt_ts(v.waiting_start),
            opt_ts(v.waiting_end),
            opt_ts(v.treatment_start),
            opt_ts(v.treatment_end),
            opt_ts(v.bed_request_time),
            format_timestamp(v.checkout_time),
            v.esi.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_inpatient<W: Write>(stays: &[InpatientStay], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(INPATIENT_HEADER)?;
    for s in stays {
        w.write_record([
            s.visit_id.clone(),
            format_timestamp(s.arrival),
            format_timestamp(s.discharge),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_weather<W: Write>(obs: &[WeatherObservation], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(WEATHER_HEADER)?;
    for o in obs {
        w.write_record([
            format_timestamp(o.hour),
            o.condition_raw.as_str().to_string(),
            format!("{:.1}", o.temperature_f),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dates<'a, W, I>(dates: I, sink: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a NaiveDate>,
{
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(DATE_HEADER)?;
    for d in dates {
        w.write_record([d.format(DATE_FORMAT).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// File layout of the source tables inside one directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFiles {
    pub ed_tracking: PathBuf,
    pub inpatient: PathBuf,
    pub weather: PathBuf,
    pub holidays: PathBuf,
    pub game1: PathBuf,
    pub game2: PathBuf,
}

impl SourceFiles {
    pub fn in_dir(dir: &Path) -> SourceFiles {
        SourceFiles {
            ed_tracking: dir.join("ed_tracking.csv"),
            inpatient: dir.join("inpatient.csv"),
            weather: dir.join("weather.csv"),
            holidays: dir.join("holidays.csv"),
            game1: dir.join("game1.csv"),
            game2: dir.join("game2.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [
            &self.ed_tracking,
            &self.inpatient,
            &self.weather,
            &self.holidays,
            &self.game1,
            &self.game2,
        ]
    }
}

/// Inclusive, gap-free hourly timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourIndex {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub hours: Vec<NaiveDateTime>,
}

impl HourIndex {
    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    /// Position of an hour-aligned instant inside the index.
    pub fn position(&self, t: NaiveDateTime) -> Option<usize> {
        if !is_hour_aligned(t) || t < self.start || t > self.end {
            return None;
        }
        Some((t - self.start).num_hours() as usize)
    }
}

pub fn build_hour_index(start: NaiveDateTime, end: NaiveDateTime) -> Result<HourIndex> {
    if !is_hour_aligned(start) || !is_hour_aligned(end) {
        return Err(Error::invalid(format!(
            "hour index bounds must be hour-aligned: {start} .. {end}"
        )));
    }
    if end < start {
        return Err(Error::invalid(format!("hour index end {end} precedes start {start}")));
    }
    let n = (end - start).num_hours() as usize + 1;
    let hours = (0..n)
        .map(|i| start + Duration::hours(i as i64))
        .collect();
    Ok(HourIndex { start, end, hours })
}
