//! Synthetic hospital data.
//!
//! [`generate`] simulates ED visits, inpatient stays, hourly weather and
//! the event calendars for a [`ScenarioConfig`], then writes them in the
//! ingest schemas. Hourly flow counts are tallied per visit while the data
//! is produced, so they can be checked against the feature pipeline.

mod calendar;
mod scenario;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::EsiGroup;
use crate::ingest::{
    write_dates, write_ed_tracking, write_inpatient, write_weather, CalendarFlags, Esi, InpatientStay, RawCondition,
    SourceFiles, VisitTimeline, WeatherObservation,
};
use crate::table::{column_kind, HourlyTable};

pub use calendar::{federal_holidays, game_days};
pub use scenario::{
    ArrivalSpec, BoardingSpec, CalendarSpec, DirtySpec, DurationSpec, InpatientSpec, PerEsi, ScenarioConfig,
    WaitingSpec, WeatherSpec,
};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

/// Columns of the ground-truth file, in order.
pub const GROUND_TRUTH_COLUMNS: [&str; 10] = [
    "boarding_count",
    "boarding_count_esi12",
    "boarding_count_esi3",
    "boarding_count_esi45",
    "waiting_count",
    "waiting_count_esi12",
    "waiting_count_esi3",
    "waiting_count_esi45",
    "treatment_count",
    "hospital_census",
];

/// Rule-breaking records added on top of the simulated visits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedCounts {
    pub waiting_too_long: usize,
    pub stuck_in_treatment: usize,
    pub boarding_too_long: usize,
}

impl InjectedCounts {
    pub fn total(&self) -> usize {
        self.waiting_too_long + self.stuck_in_treatment + self.boarding_too_long
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub seed: u64,
    /// First and last hour of the timeline.
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    /// Clean and injected visits, ordered by arrival.
    pub visits: Vec<VisitTimeline>,
    pub stays: Vec<InpatientStay>,
    pub weather: Vec<WeatherObservation>,
    pub calendar: CalendarFlags,
    /// Hourly counts of the clean visits and the stays.
    pub ground_truth: HourlyTable,
    pub injected: InjectedCounts,
}

impl SyntheticData {
    /// Writes the six source tables into `dir`.
    pub fn write_sources(&self, dir: &Path) -> Result<SourceFiles> {
        std::fs::create_dir_all(dir)?;
        let files = SourceFiles::in_dir(dir);
        let create = |p: &Path| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(p)?)) };
        write_ed_tracking(&self.visits, create(&files.ed_tracking)?)?;
        write_inpatient(&self.stays, create(&files.inpatient)?)?;
        write_weather(&self.weather, create(&files.weather)?)?;
        write_dates(&self.calendar.holiday_dates, create(&files.holidays)?)?;
        write_dates(&self.calendar.game1_dates, create(&files.game1)?)?;
        write_dates(&self.calendar.game2_dates, create(&files.game2)?)?;
        Ok(files)
    }

    pub fn write_ground_truth(&self, path: &Path) -> Result<()> {
        self.ground_truth.write_csv(BufWriter::new(File::create(path)?))
    }
}

const HOUR: i64 = 3600;

fn secs(t: NaiveDateTime) -> i64 {
    t.and_utc().timestamp()
}

fn at(s: i64) -> NaiveDateTime {
    DateTime::from_timestamp(s, 0).expect("timestamp in range").naive_utc()
}

/// Log-normal sampler in seconds, redrawing values above the cap.
struct Durations {
    dist: LogNormal<f64>,
    cap: f64,
}

impl Durations {
    fn new(mean: f64, cv: f64, cap: f64) -> Result<Durations> {
        let sigma2 = (1.0 + cv * cv).ln();
        let dist = LogNormal::new(mean.ln() - sigma2 / 2.0, sigma2.sqrt())
            .map_err(|e| Error::invalid(format!("duration distribution: {e}")))?;
        Ok(Durations { dist, cap })
    }

    fn minutes(spec: &DurationSpec) -> Result<Durations> {
        Self::new(spec.mean_minutes * 60.0, spec.cv, spec.max_minutes * 60.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        loop {
            let v = self.dist.sample(rng);
            if v <= self.cap {
                return v.round() as i64;
            }
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

const ESI_CLASSES: [Option<Esi>; 7] = [
    Some(Esi::Level(1)),
    Some(Esi::Level(2)),
    Some(Esi::Level(3)),
    Some(Esi::Level(4)),
    Some(Esi::Level(5)),
    Some(Esi::Obstetrics),
    None,
];

#[derive(Debug, Clone)]
struct SimVisit {
    id: usize,
    arrival: i64,
    waiting: (i64, i64),
    treatment: (i64, i64),
    bed_request: Option<i64>,
    ready: i64,
    checkout: i64,
    esi: Option<Esi>,
}

impl SimVisit {
    fn timeline(&self) -> VisitTimeline {
        VisitTimeline {
            visit_id: format!("V{:07}", self.id),
            arrival_time: at(self.arrival),
            waiting_start: Some(at(self.waiting.0)),
            waiting_end: Some(at(self.waiting.1)),
            treatment_start: Some(at(self.treatment.0)),
            treatment_end: Some(at(self.treatment.1)),
            bed_request_time: self.bed_request.map(at),
            checkout_time: at(self.checkout),
            esi: self.esi,
        }
    }
}

struct SimStay {
    id: String,
    arrival: i64,
    discharge: i64,
}

struct Weather {
    hours: Vec<(RawCondition, f64)>,
}

fn simulate_weather(spec: &WeatherSpec, from: NaiveDateTime, n: usize, rng: &mut ChaCha8Rng) -> Weather {
    let conditions: Vec<RawCondition> = spec.condition_weights.keys().copied().collect();
    let pick = WeightedIndex::new(spec.condition_weights.values().copied()).expect("validated weights");
    let phi: f64 = 0.95;
    let innovation = spec.temperature_noise * (1.0 - phi * phi).sqrt();
    let mut noise = 0.0;
    let mut current = conditions[pick.sample(rng)];
    let mut hours = Vec::with_capacity(n);
    for i in 0..n {
        let t = from + Duration::hours(i as i64);
        if i > 0 && rng.random::<f64>() >= spec.persistence {
            current = conditions[pick.sample(rng)];
        }
        noise = phi * noise + innovation * (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt();
        let annual = (2.0 * PI * (t.ordinal0() as f64 - 200.0) / 365.25).cos();
        let daily = (2.0 * PI * (t.hour() as f64 - 15.0) / 24.0).cos();
        let temp = spec.temperature_mean
            + spec.temperature_annual_amplitude * annual
            + spec.temperature_daily_amplitude * daily
            + noise;
        // stored at the precision the weather file keeps
        hours.push((current, (temp * 10.0).round() / 10.0));
    }
    Weather { hours }
}

/// Day-level log crowding factor, AR(1) across days, one value per hour
/// by linear interpolation between day midpoints.
fn simulate_surge(spec: &ArrivalSpec, n_hours: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let days = n_hours / 24 + 2;
    let phi = spec.surge_persistence;
    let innovation = spec.surge_std * (1.0 - phi * phi).sqrt();
    let normal = rand_distr::StandardNormal;
    let mut z = Vec::with_capacity(days);
    let mut prev: f64 = spec.surge_std * rng.sample::<f64, _>(normal);
    for _ in 0..days {
        z.push(prev);
        prev = phi * prev + innovation * rng.sample::<f64, _>(normal);
    }
    (0..n_hours)
        .map(|i| {
            let x = (i as f64 + 0.5) / 24.0 - 0.5;
            let d = x.floor().max(0.0) as usize;
            let f = (x - d as f64).clamp(0.0, 1.0);
            z[d] * (1.0 - f) + z[d + 1] * f
        })
        .collect()
}

fn arrival_rate(s: &ScenarioConfig, t: NaiveDateTime, start: NaiveDateTime, w: (RawCondition, f64), cal: &CalendarFlags) -> f64 {
    let a = &s.arrivals;
    let years = (t - start).num_seconds() as f64 / (365.25 * 86400.0);
    let hour = t.hour() as f64 + 0.5;
    let dow = t.weekday().num_days_from_monday() as f64;
    let mut rate = a.base_rate
        * (1.0 + a.trend_per_year * years)
        * (1.0 + a.daily_amplitude * (2.0 * PI * (hour - a.daily_peak_hour) / 24.0).cos())
        * (1.0 + a.weekly_amplitude * (2.0 * PI * (dow - a.weekly_peak_day) / 7.0).cos())
        * (1.0 + a.annual_amplitude * (2.0 * PI * (t.ordinal0() as f64 - a.annual_peak_day) / 365.25).cos());
    if cal.is_holiday(t) {
        rate *= s.calendar.holiday_multiplier;
    }
    if cal.is_game1(t) {
        rate *= s.calendar.game1_multiplier;
    }
    if cal.is_game2(t) {
        rate *= s.calendar.game2_multiplier;
    }
    match w.0 {
        RawCondition::Rain | RawCondition::Drizzle => rate *= s.weather.rain_multiplier,
        RawCondition::Thunderstorm => rate *= s.weather.thunderstorm_multiplier,
        _ => {}
    }
    rate * (1.0 + s.weather.heat_slope * (w.1 - s.weather.heat_threshold_f).max(0.0))
}

struct Discharges {
    los: Durations,
    hour: WeightedIndex<f64>,
    weekend_delay: f64,
}

impl Discharges {
    fn new(spec: &InpatientSpec) -> Result<Discharges> {
        let los_secs = spec.length_of_stay_days * 86400.0;
        Ok(Discharges {
            los: Durations::new(los_secs, spec.length_of_stay_cv, los_secs * 20.0)?,
            hour: WeightedIndex::new(spec.discharge_hour_weights.iter().copied())
                .map_err(|e| Error::invalid(format!("discharge hours: {e}")))?,
            weekend_delay: spec.weekend_discharge_delay,
        })
    }

    /// Discharge instant for a stay starting at `arrival`: the stay length
    /// fixes the day, the hour-of-day profile fixes the time.
    fn draw(&self, arrival: i64, rng: &mut ChaCha8Rng) -> i64 {
        let mut day = at(arrival + self.los.sample(rng)).date();
        let weekend = matches!(day.weekday(), Weekday::Sat | Weekday::Sun);
        if weekend && rng.random::<f64>() < self.weekend_delay {
            while day.weekday() != Weekday::Mon {
                day = day.succ_opt().expect("date in range");
            }
        }
        let hour = self.hour.sample(rng) as i64;
        let mut t = secs(day.and_hms_opt(0, 0, 0).expect("midnight")) + hour * HOUR + rng.random_range(0..HOUR);
        while t <= arrival + 4 * HOUR {
            t += 24 * HOUR;
        }
        t
    }
}

/// Simulates the scenario with the given seed.
pub fn generate(scenario: &ScenarioConfig, seed: u64) -> Result<SyntheticData> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = scenario.start.and_hms_opt(0, 0, 0).expect("midnight");
    let end = scenario.end.and_hms_opt(23, 0, 0).expect("last hour");
    let sim_start = start - Duration::days(scenario.warmup_days as i64);
    let arrival_hours = ((end - sim_start).num_hours() + 1) as usize;
    let drain_hours = scenario.boarding.max_hours.ceil() as i64 + 48;
    let sim_hours = arrival_hours + drain_hours as usize;

    let mut calendar = CalendarFlags::default();
    for year in sim_start.year()..=end.year() {
        calendar.holiday_dates.extend(federal_holidays(year));
        let (g1, g2) = game_days(year, scenario.calendar.game1_per_season, scenario.calendar.game2_per_season, &mut rng);
        calendar.game1_dates.extend(g1);
        calendar.game2_dates.extend(g2);
    }
    let weather = simulate_weather(&scenario.weather, sim_start, arrival_hours, &mut rng);

    let visits = simulate_ed(scenario, sim_start, &weather, &calendar, start, &mut rng)?;
    let (visits, stays) = simulate_boarding(scenario, sim_start, sim_hours, visits, &mut rng)?;

    let (t0, t_end) = (secs(start), secs(end) + HOUR);
    let kept: Vec<&SimVisit> = visits
        .iter()
        .filter(|v| v.checkout > t0 && v.arrival < t_end)
        .collect();
    let stays: Vec<SimStay> = stays
        .into_iter()
        .filter(|s| s.discharge > t0 && s.arrival < t_end)
        .collect();
    let ground_truth = bookkeeping(&kept, &stays, start, end)?;

    let mut timelines: Vec<VisitTimeline> = kept.iter().map(|v| v.timeline()).collect();
    let injected = inject_dirty(scenario, &mut timelines, start, end, &mut rng)?;
    timelines.sort_by(|a, b| (a.arrival_time, &a.visit_id).cmp(&(b.arrival_time, &b.visit_id)));

    let mut stays: Vec<InpatientStay> = stays
        .into_iter()
        .map(|s| InpatientStay { visit_id: s.id, arrival: at(s.arrival), discharge: at(s.discharge) })
        .collect();
    stays.sort_by(|a, b| (a.arrival, &a.visit_id).cmp(&(b.arrival, &b.visit_id)));

    let offset = (start - sim_start).num_hours() as usize;
    let weather = weather.hours[offset..]
        .iter()
        .enumerate()
        .map(|(i, &(c, temp))| WeatherObservation {
            hour: start + Duration::hours(i as i64),
            condition_raw: c,
            temperature_f: temp,
        })
        .collect();
    let in_range = |d: &chrono::NaiveDate| *d >= scenario.start && *d <= scenario.end;
    calendar.holiday_dates.retain(in_range);
    calendar.game1_dates.retain(in_range);
    calendar.game2_dates.retain(in_range);

    Ok(SyntheticData {
        seed,
        start,
        end,
        visits: timelines,
        stays,
        weather,
        calendar,
        ground_truth,
        injected,
    })
}

fn simulate_ed(
    s: &ScenarioConfig,
    sim_start: NaiveDateTime,
    weather: &Weather,
    calendar: &CalendarFlags,
    trend_origin: NaiveDateTime,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SimVisit>> {
    let esi_pick = WeightedIndex::new(s.esi_mix.as_array())
        .map_err(|e| Error::invalid(format!("esi mix: {e}")))?;
    let admit = s.admit_probability.as_array();
    let waits = s
        .waiting
        .mean_minutes
        .as_array()
        .iter()
        .map(|&m| Durations::new(m * 60.0, s.waiting.cv, s.waiting.max_minutes * 60.0))
        .collect::<Result<Vec<_>>>()?;
    let treatment = Durations::minutes(&s.treatment)?;
    let ready = Durations::minutes(&s.boarding.ready)?;
    let triage = (s.triage_minutes * 60.0).round() as i64;
    let discharge = (s.discharge_minutes * 60.0).round() as i64;

    let surge = simulate_surge(&s.arrivals, weather.hours.len(), rng);
    let mut visits = Vec::new();
    for (i, &w) in weather.hours.iter().enumerate() {
        let t = sim_start + Duration::hours(i as i64);
        let n = poisson(rng, arrival_rate(s, t, trend_origin, w, calendar) * surge[i].exp());
        let base = secs(t);
        let mut arrivals: Vec<i64> = (0..n).map(|_| base + rng.random_range(0..HOUR)).collect();
        arrivals.sort_unstable();
        for arrival in arrivals {
            let class = esi_pick.sample(rng);
            let ws = arrival + rng.random_range(0..=triage);
            let we = ws + waits[class].sample(rng);
            let te = we + treatment.sample(rng);
            let admitted = rng.random::<f64>() < admit[class];
            let (bed_request, ready_at, checkout) = if admitted {
                (Some(te), te + ready.sample(rng), 0)
            } else {
                (None, 0, te + rng.random_range(0..=discharge))
            };
            visits.push(SimVisit {
                id: visits.len() + 1,
                arrival,
                waiting: (ws, we),
                treatment: (we, te),
                bed_request,
                ready: ready_at,
                checkout,
                esi: ESI_CLASSES[class],
            });
        }
    }
    Ok(visits)
}

/// Hour-by-hour bed assignment: ready boarders leave at the current
/// hazard, which drops as the census rises; each departure starts an
/// inpatient stay.
fn simulate_boarding(
    s: &ScenarioConfig,
    sim_start: NaiveDateTime,
    sim_hours: usize,
    mut visits: Vec<SimVisit>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<SimVisit>, Vec<SimStay>)> {
    let b = &s.boarding;
    let ip = &s.inpatient;
    let discharges = Discharges::new(ip)?;
    let max_board = (b.max_hours * HOUR as f64).round() as i64;
    let direct_mean = ip.direct_hour_weights.iter().sum::<f64>() / 24.0;
    let t0 = secs(sim_start);

    let mut stays = Vec::new();
    let mut census: BinaryHeap<Reverse<i64>> = BinaryHeap::new();
    for k in 0..ip.initial_census {
        let elapsed = discharges.los.sample(rng).max(2 * HOUR);
        let arrival = t0 - rng.random_range(HOUR..elapsed);
        let mut discharge = discharges.draw(arrival, rng);
        if discharge <= t0 {
            discharge = t0 + rng.random_range(HOUR..48 * HOUR);
        }
        census.push(Reverse(discharge));
        stays.push(SimStay { id: format!("I{:07}", k + 1), arrival, discharge });
    }
    let mut direct_id = ip.initial_census;

    let mut order: Vec<usize> = (0..visits.len()).filter(|&i| visits[i].bed_request.is_some()).collect();
    order.sort_by_key(|&i| (visits[i].bed_request, i));
    let mut next = 0usize;
    let mut pending: Vec<usize> = Vec::new();

    for h in 0..sim_hours {
        let hs = t0 + h as i64 * HOUR;
        let he = hs + HOUR;
        while matches!(census.peek(), Some(Reverse(d)) if *d <= hs) {
            census.pop();
        }
        let occupied = census.len() as f64;
        while next < order.len() && visits[order[next]].bed_request.expect("boarder") < he {
            pending.push(order[next]);
            next += 1;
        }
        let hour = at(hs).hour() as usize;
        let rate = b.hourly_hazard[hour] * (-b.congestion_sensitivity * (occupied - b.reference_census) / b.reference_census).exp();

        let mut admitted: Vec<(usize, i64)> = Vec::new();
        pending.retain(|&i| {
            let v = &visits[i];
            let forced = v.bed_request.expect("boarder") + max_board;
            let from = v.ready.max(hs);
            let to = forced.min(he);
            if to > from {
                let p = 1.0 - (-rate * (to - from) as f64 / HOUR as f64).exp();
                if rng.random::<f64>() < p {
                    admitted.push((i, from + rng.random_range(0..to - from)));
                    return false;
                }
            }
            if forced < he && forced >= hs {
                admitted.push((i, forced));
                return false;
            }
            true
        });
        for (i, t) in admitted {
            visits[i].checkout = t;
            let discharge = discharges.draw(t, rng);
            census.push(Reverse(discharge));
            stays.push(SimStay { id: format!("V{:07}", visits[i].id), arrival: t, discharge });
        }

        let weekend = matches!(at(hs).weekday(), Weekday::Sat | Weekday::Sun);
        let factor = if weekend { ip.weekend_direct_factor } else { 1.0 };
        let lambda = ip.direct_admissions_per_day / 24.0 * ip.direct_hour_weights[hour] / direct_mean * factor;
        for _ in 0..poisson(rng, lambda) {
            direct_id += 1;
            let arrival = hs + rng.random_range(0..HOUR);
            let discharge = discharges.draw(arrival, rng);
            census.push(Reverse(discharge));
            stays.push(SimStay { id: format!("I{direct_id:07}"), arrival, discharge });
        }
    }
    if !pending.is_empty() || next < order.len() {
        return Err(Error::invalid("boarding simulation ended with patients still boarding"));
    }
    Ok((visits, stays))
}

/// Tallies every clean visit and stay into the hours its intervals cover.
fn bookkeeping(visits: &[&SimVisit], stays: &[SimStay], start: NaiveDateTime, end: NaiveDateTime) -> Result<HourlyTable> {
    let n = ((end - start).num_hours() + 1) as usize;
    let t0 = secs(start);
    let mut cols = vec![vec![0.0f64; n]; GROUND_TRUTH_COLUMNS.len()];
    let mut mark = |col: usize, from: i64, to: i64| {
        let mut k = if from <= t0 { 0 } else { ((from - t0) + HOUR - 1) / HOUR };
        while k < n as i64 && t0 + k * HOUR < to {
            cols[col][k as usize] += 1.0;
            k += 1;
        }
    };
    for v in visits {
        let g = match EsiGroup::of(v.esi) {
            EsiGroup::G12 => 1,
            EsiGroup::G3 => 2,
            EsiGroup::G45 => 3,
        };
        if let Some(b) = v.bed_request {
            mark(0, b, v.checkout);
            mark(g, b, v.checkout);
        }
        mark(4, v.waiting.0, v.waiting.1);
        mark(4 + g, v.waiting.0, v.waiting.1);
        mark(8, v.treatment.0, v.treatment.1);
    }
    for s in stays {
        mark(9, s.arrival, s.discharge);
    }
    let mut table = HourlyTable::new((0..n).map(|i| start + Duration::hours(i as i64)).collect());
    for (name, values) in GROUND_TRUTH_COLUMNS.iter().zip(cols) {
        table.push_column(*name, column_kind(name).expect("hourly column"), values)?;
    }
    Ok(table)
}

/// Adds visits that break exactly one cleaning rule each.
fn inject_dirty(
    s: &ScenarioConfig,
    visits: &mut Vec<VisitTimeline>,
    start: NaiveDateTime,
    end: NaiveDateTime,
    rng: &mut ChaCha8Rng,
) -> Result<InjectedCounts> {
    let clean = visits.len() as f64;
    let counts = InjectedCounts {
        waiting_too_long: (s.dirty.waiting_too_long * clean).round() as usize,
        stuck_in_treatment: (s.dirty.stuck_in_treatment * clean).round() as usize,
        boarding_too_long: (s.dirty.boarding_too_long * clean).round() as usize,
    };
    let esi_pick = WeightedIndex::new(s.esi_mix.as_array())
        .map_err(|e| Error::invalid(format!("esi mix: {e}")))?;
    let span = secs(end) + HOUR - secs(start);
    let mut id = 0usize;
    let kinds = [
        (0usize, counts.waiting_too_long),
        (1, counts.stuck_in_treatment),
        (2, counts.boarding_too_long),
    ];
    for (kind, count) in kinds {
        for _ in 0..count {
            id += 1;
            let arrival = secs(start) + rng.random_range(0..span);
            let ws = arrival + rng.random_range(0..=600);
            let wait = match kind {
                0 => rng.random_range(570 * 60..1200 * 60),
                _ => rng.random_range(10 * 60..120 * 60),
            };
            let treat = match kind {
                1 => rng.random_range(5200 * HOUR..6000 * HOUR),
                _ => rng.random_range(HOUR..6 * HOUR),
            };
            let te = ws + wait + treat;
            let (bed_request, checkout) = match kind {
                2 => (Some(te), te + rng.random_range(301 * HOUR..400 * HOUR)),
                _ => (None, te + rng.random_range(0..1200)),
            };
            visits.push(VisitTimeline {
                visit_id: format!("X{id:07}"),
                arrival_time: at(arrival),
                waiting_start: Some(at(ws)),
                waiting_end: Some(at(ws + wait)),
                treatment_start: Some(at(ws + wait)),
                treatment_end: Some(at(te)),
                bed_request_time: bed_request.map(at),
                checkout_time: at(checkout),
                esi: ESI_CLASSES[esi_pick.sample(rng)],
            });
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests;
