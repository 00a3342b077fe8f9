use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RawCondition;
use crate::preprocess::CleaningRules;

const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.json");

/// One value per triage class, unrecorded acuity included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerEsi {
    pub esi1: f64,
    pub esi2: f64,
    pub esi3: f64,
    pub esi4: f64,
    pub esi5: f64,
    pub obstetrics: f64,
    pub missing: f64,
}

impl PerEsi {
    pub fn as_array(&self) -> [f64; 7] {
        [self.esi1, self.esi2, self.esi3, self.esi4, self.esi5, self.obstetrics, self.missing]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSpec {
    /// Visits per hour before modulation.
    pub base_rate: f64,
    pub daily_amplitude: f64,
    pub daily_peak_hour: f64,
    pub weekly_amplitude: f64,
    /// Monday = 0.
    pub weekly_peak_day: f64,
    pub annual_amplitude: f64,
    /// Day of year with the most arrivals.
    pub annual_peak_day: f64,
    /// Relative growth of the arrival rate per year.
    pub trend_per_year: f64,
    /// Standard deviation of the day-level log crowding factor.
    pub surge_std: f64,
    /// Day-to-day autocorrelation of the crowding factor.
    pub surge_persistence: f64,
}

/// Log-normal duration given by its mean and coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationSpec {
    pub mean_minutes: f64,
    pub cv: f64,
    /// Draws above this are redrawn.
    pub max_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitingSpec {
    pub mean_minutes: PerEsi,
    pub cv: f64,
    pub max_minutes: f64,
}

/// Boarding ends once a bed is found. A patient first needs a log-normal
/// preparation time; after that, departures follow an hour-of-day hazard
/// scaled down when the hospital is fuller than `reference_census`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardingSpec {
    pub ready: DurationSpec,
    /// Departures per hour for a ready boarder, by hour of day.
    pub hourly_hazard: Vec<f64>,
    pub congestion_sensitivity: f64,
    pub reference_census: f64,
    /// Boarders still waiting after this long leave at once.
    pub max_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpatientSpec {
    pub initial_census: usize,
    /// Admissions per day that bypass the ED.
    pub direct_admissions_per_day: f64,
    /// Relative weight of direct admissions by hour of day.
    pub direct_hour_weights: Vec<f64>,
    pub weekend_direct_factor: f64,
    pub length_of_stay_days: f64,
    pub length_of_stay_cv: f64,
    /// Relative weight of discharges by hour of day.
    pub discharge_hour_weights: Vec<f64>,
    /// Chance that a discharge falling on a weekend slips to Monday.
    pub weekend_discharge_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSpec {
    pub condition_weights: BTreeMap<RawCondition, f64>,
    /// Chance the condition of the previous hour carries over.
    pub persistence: f64,
    pub temperature_mean: f64,
    pub temperature_annual_amplitude: f64,
    pub temperature_daily_amplitude: f64,
    pub temperature_noise: f64,
    pub rain_multiplier: f64,
    pub thunderstorm_multiplier: f64,
    pub heat_threshold_f: f64,
    /// Relative arrival increase per degree above the threshold.
    pub heat_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalendarSpec {
    pub holiday_multiplier: f64,
    pub game1_multiplier: f64,
    pub game2_multiplier: f64,
    pub game1_per_season: usize,
    pub game2_per_season: usize,
}

/// Extra records per clean visit that break one cleaning rule each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DirtySpec {
    pub waiting_too_long: f64,
    pub stuck_in_treatment: f64,
    pub boarding_too_long: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// First and last day, inclusive.
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Days simulated before `start` so queues and census are settled.
    pub warmup_days: u32,
    pub arrivals: ArrivalSpec,
    pub esi_mix: PerEsi,
    pub admit_probability: PerEsi,
    pub triage_minutes: f64,
    pub waiting: WaitingSpec,
    pub treatment: DurationSpec,
    pub discharge_minutes: f64,
    pub boarding: BoardingSpec,
    pub inpatient: InpatientSpec,
    pub weather: WeatherSpec,
    pub calendar: CalendarSpec,
    pub dirty: DirtySpec,
    pub seed: u64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("scenario: `{name}` must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("scenario: `{name}` must be non-negative, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("scenario: `{name}` must lie in [0, 1], got {v}")))
    }
}

fn sums_to_one(name: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for v in values {
        probability(name, v)?;
        total += v;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("scenario: `{name}` sums to {total}, not 1")));
    }
    Ok(())
}

fn hour_profile(name: &str, weights: &[f64]) -> Result<()> {
    if weights.len() != 24 {
        return Err(Error::invalid(format!("scenario: `{name}` needs 24 values, got {}", weights.len())));
    }
    for &w in weights {
        non_negative(name, w)?;
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid(format!("scenario: `{name}` is all zero")));
    }
    Ok(())
}

fn duration(name: &str, d: &DurationSpec) -> Result<()> {
    positive(name, d.mean_minutes)?;
    positive(name, d.cv)?;
    if !(d.max_minutes > d.mean_minutes) {
        return Err(Error::invalid(format!("scenario: `{name}` cap must exceed the mean")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn builtin_default() -> ScenarioConfig {
        serde_json::from_str(DEFAULT_SCENARIO).expect("shipped scenario parses")
    }

    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        let s: ScenarioConfig = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `default` or a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<ScenarioConfig> {
        if name_or_path == "default" {
            Ok(Self::builtin_default())
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.end < self.start {
            return Err(Error::invalid(format!("scenario ends ({}) before it starts ({})", self.end, self.start)));
        }
        let a = &self.arrivals;
        positive("arrivals.base_rate", a.base_rate)?;
        probability("arrivals.daily_amplitude", a.daily_amplitude)?;
        probability("arrivals.weekly_amplitude", a.weekly_amplitude)?;
        probability("arrivals.annual_amplitude", a.annual_amplitude)?;
        if a.daily_amplitude >= 1.0 || a.weekly_amplitude >= 1.0 || a.annual_amplitude >= 1.0 {
            return Err(Error::invalid("scenario: seasonal amplitudes must stay below 1"));
        }
        non_negative("arrivals.surge_std", a.surge_std)?;
        probability("arrivals.surge_persistence", a.surge_persistence)?;
        if a.surge_persistence >= 1.0 {
            return Err(Error::invalid("scenario: `arrivals.surge_persistence` must stay below 1"));
        }
        if !(a.trend_per_year > -1.0) {
            return Err(Error::invalid("scenario: `arrivals.trend_per_year` must exceed -1"));
        }
        sums_to_one("esi_mix", self.esi_mix.as_array())?;
        for p in self.admit_probability.as_array() {
            probability("admit_probability", p)?;
        }
        non_negative("triage_minutes", self.triage_minutes)?;
        non_negative("discharge_minutes", self.discharge_minutes)?;
        for m in self.waiting.mean_minutes.as_array() {
            positive("waiting.mean_minutes", m)?;
        }
        positive("waiting.cv", self.waiting.cv)?;
        let rules = CleaningRules::default();
        let max_mean = self.waiting.mean_minutes.as_array().into_iter().fold(0.0, f64::max);
        if !(self.waiting.max_minutes > max_mean) || self.waiting.max_minutes > rules.max_waiting_hours * 60.0 {
            return Err(Error::invalid("scenario: `waiting.max_minutes` must exceed every mean and stay within the cleaning limit"));
        }
        duration("treatment", &self.treatment)?;
        if self.treatment.max_minutes > rules.max_treatment_hours * 60.0 {
            return Err(Error::invalid("scenario: `treatment.max_minutes` exceeds the cleaning limit"));
        }
        let b = &self.boarding;
        duration("boarding.ready", &b.ready)?;
        hour_profile("boarding.hourly_hazard", &b.hourly_hazard)?;
        non_negative("boarding.congestion_sensitivity", b.congestion_sensitivity)?;
        positive("boarding.reference_census", b.reference_census)?;
        positive("boarding.max_hours", b.max_hours)?;
        if b.max_hours > rules.max_boarding_hours || b.max_hours * 60.0 <= b.ready.max_minutes {
            return Err(Error::invalid(
                "scenario: `boarding.max_hours` must exceed the ready cap and stay within the cleaning limit",
            ));
        }
        let ip = &self.inpatient;
        non_negative("inpatient.direct_admissions_per_day", ip.direct_admissions_per_day)?;
        hour_profile("inpatient.direct_hour_weights", &ip.direct_hour_weights)?;
        non_negative("inpatient.weekend_direct_factor", ip.weekend_direct_factor)?;
        positive("inpatient.length_of_stay_days", ip.length_of_stay_days)?;
        positive("inpatient.length_of_stay_cv", ip.length_of_stay_cv)?;
        hour_profile("inpatient.discharge_hour_weights", &ip.discharge_hour_weights)?;
        probability("inpatient.weekend_discharge_delay", ip.weekend_discharge_delay)?;
        let w = &self.weather;
        sums_to_one("weather.condition_weights", w.condition_weights.values().copied())?;
        probability("weather.persistence", w.persistence)?;
        non_negative("weather.temperature_noise", w.temperature_noise)?;
        positive("weather.rain_multiplier", w.rain_multiplier)?;
        positive("weather.thunderstorm_multiplier", w.thunderstorm_multiplier)?;
        non_negative("weather.heat_slope", w.heat_slope)?;
        let c = &self.calendar;
        positive("calendar.holiday_multiplier", c.holiday_multiplier)?;
        positive("calendar.game1_multiplier", c.game1_multiplier)?;
        positive("calendar.game2_multiplier", c.game2_multiplier)?;
        if c.game1_per_season + c.game2_per_season > 13 {
            return Err(Error::invalid("scenario: more games than autumn Saturdays"));
        }
        non_negative("dirty.waiting_too_long", self.dirty.waiting_too_long)?;
        non_negative("dirty.stuck_in_treatment", self.dirty.stuck_in_treatment)?;
        non_negative("dirty.boarding_too_long", self.dirty.boarding_too_long)?;
        Ok(())
    }
}
