use super::*;
use crate::flow::compute_flow_metrics;
use crate::ingest::{build_hour_index, parse_calendar, parse_ed_tracking, parse_inpatient, parse_weather};
use crate::preprocess::{clean_visits, CleaningRules};
use chrono::NaiveDate;
use std::collections::BTreeMap;

fn short(days: i64) -> ScenarioConfig {
    let mut s = ScenarioConfig::builtin_default();
    s.start = NaiveDate::from_ymd_opt(2021, 9, 1).unwrap();
    s.end = s.start + Duration::days(days - 1);
    s.warmup_days = 10;
    s
}

fn read_all(dir: &Path) -> Vec<Vec<u8>> {
    SourceFiles::in_dir(dir).all().iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn same_seed_same_bytes() {
    let s = short(20);
    let base = std::env::temp_dir().join(format!("boardcast-synth-{}", std::process::id()));
    let (a, b, c) = (base.join("a"), base.join("b"), base.join("c"));
    generate(&s, 5).unwrap().write_sources(&a).unwrap();
    generate(&s, 5).unwrap().write_sources(&b).unwrap();
    generate(&s, 6).unwrap().write_sources(&c).unwrap();
    assert_eq!(read_all(&a), read_all(&b));
    assert_ne!(read_all(&a)[0], read_all(&c)[0]);
    std::fs::remove_dir_all(&base).unwrap();
}

#[test]
fn ground_truth_matches_flow_metrics() {
    let d = generate(&short(30), 11).unwrap();
    let (clean, report) = clean_visits(d.visits.clone(), &CleaningRules::default());
    assert_eq!(report.waiting_excluded, d.injected.waiting_too_long);
    assert_eq!(report.stuck_treatment_excluded, d.injected.stuck_in_treatment);
    assert_eq!(report.boarding_excluded, d.injected.boarding_too_long);
    assert!(d.injected.total() > 0);
    let idx = build_hour_index(d.start, d.end).unwrap();
    let flow = compute_flow_metrics(&clean, &d.stays, &idx).unwrap();
    for name in GROUND_TRUTH_COLUMNS {
        assert_eq!(
            flow.get(name).unwrap().values,
            d.ground_truth.values(name).unwrap(),
            "{name}"
        );
    }
    assert!(clean.iter().all(|v| v.is_monotonic()));
}

#[test]
fn zero_dirty_rate_cleans_nothing() {
    let mut s = short(15);
    s.dirty = DirtySpec::default();
    let d = generate(&s, 2).unwrap();
    assert_eq!(d.injected.total(), 0);
    let n = d.visits.len();
    let (kept, report) = clean_visits(d.visits, &CleaningRules::default());
    assert_eq!(kept.len(), n);
    assert_eq!(report.total_excluded(), 0);
}

#[test]
fn sources_round_trip_through_parsers() {
    let d = generate(&short(10), 4).unwrap();
    let dir = std::env::temp_dir().join(format!("boardcast-synth-rt-{}", std::process::id()));
    let files = d.write_sources(&dir).unwrap();
    let open = |p: &Path| std::fs::File::open(p).unwrap();
    let visits = parse_ed_tracking(open(&files.ed_tracking)).unwrap();
    assert!(visits.rejected.is_empty());
    assert_eq!(visits.records, d.visits);
    assert_eq!(parse_inpatient(open(&files.inpatient)).unwrap().records, d.stays);
    assert_eq!(parse_weather(open(&files.weather)).unwrap().records, d.weather);
    let (cal, _) = parse_calendar(open(&files.holidays), open(&files.game1), open(&files.game2)).unwrap();
    assert_eq!(cal, d.calendar);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn flat(mut s: ScenarioConfig) -> ScenarioConfig {
    let a = &mut s.arrivals;
    a.daily_amplitude = 0.0;
    a.weekly_amplitude = 0.0;
    a.annual_amplitude = 0.0;
    a.trend_per_year = 0.0;
    a.surge_std = 0.0;
    s.calendar.holiday_multiplier = 1.0;
    s.calendar.game1_multiplier = 1.0;
    s.calendar.game2_multiplier = 1.0;
    s.weather.rain_multiplier = 1.0;
    s.weather.thunderstorm_multiplier = 1.0;
    s.weather.heat_slope = 0.0;
    s.dirty = DirtySpec::default();
    s
}

#[test]
fn stationary_waiting_count_matches_occupancy_mean() {
    // Poisson arrivals at rate lambda with mean wait m keep a
    // Poisson(lambda * m) number of patients waiting at any instant.
    let mut s = flat(short(240));
    s.arrivals.base_rate = 6.0;
    s.waiting.mean_minutes = PerEsi {
        esi1: 20.0,
        esi2: 30.0,
        esi3: 45.0,
        esi4: 25.0,
        esi5: 15.0,
        obstetrics: 20.0,
        missing: 40.0,
    };
    s.waiting.cv = 0.5;
    let d = generate(&s, 9).unwrap();
    let mix = s.esi_mix.as_array();
    let means = s.waiting.mean_minutes.as_array();
    let mean_wait_h: f64 = mix.iter().zip(means).map(|(p, m)| p * m / 60.0).sum();
    let expected = s.arrivals.base_rate * mean_wait_h;

    let w = d.ground_truth.values("waiting_count").unwrap();
    assert!(w.len() >= 5000);
    let days: Vec<f64> = w.chunks(24).map(|c| c.iter().sum::<f64>() / 24.0).collect();
    let k = days.len() as f64;
    let mean = days.iter().sum::<f64>() / k;
    let var = days.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let se = (var / k).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "mean {mean}, expected {expected}, se {se}");
}

#[test]
fn holiday_multiplier_raises_arrivals() {
    let mut s = flat(ScenarioConfig::builtin_default());
    s.calendar.holiday_multiplier = 1.3;
    let d = generate(&s, 21).unwrap();
    let mut per_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for v in &d.visits {
        let day = v.arrival_time.date();
        if day >= s.start && day <= s.end {
            *per_day.entry(day).or_default() += 1.0;
        }
    }
    let (hol, other): (Vec<_>, Vec<_>) = per_day
        .iter()
        .partition(|(day, _)| d.calendar.holiday_dates.contains(day));
    let stats = |xs: &[(&NaiveDate, &f64)]| {
        let n = xs.len() as f64;
        let m = xs.iter().map(|(_, v)| **v).sum::<f64>() / n;
        let var = xs.iter().map(|(_, v)| (**v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var / n)
    };
    assert!(hol.len() >= 20);
    let (mh, vh) = stats(&hol);
    let (mo, vo) = stats(&other);
    // one-sided test at roughly the 0.1% level
    assert!(mh - mo > 3.1 * (vh + vo).sqrt(), "holiday {mh} vs other {mo}");
}
