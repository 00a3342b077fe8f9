use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::Rng;

fn observed(d: NaiveDate) -> NaiveDate {
    match d.weekday() {
        Weekday::Sat => d.pred_opt().expect("date in range"),
        Weekday::Sun => d.succ_opt().expect("date in range"),
        _ => d,
    }
}

fn nth(year: i32, month: u32, weekday: Weekday, n: u8) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, n).expect("weekday exists")
}

fn last(year: i32, month: u32, weekday: Weekday) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, 5).unwrap_or_else(|| nth(year, month, weekday, 4))
}

/// US federal holidays of `year` on their observed dates.
pub fn federal_holidays(year: i32) -> Vec<NaiveDate> {
    let fixed = |m, d| observed(NaiveDate::from_ymd_opt(year, m, d).expect("valid date"));
    let mut days = vec![
        fixed(1, 1),
        nth(year, 1, Weekday::Mon, 3),
        nth(year, 2, Weekday::Mon, 3),
        last(year, 5, Weekday::Mon),
        fixed(7, 4),
        nth(year, 9, Weekday::Mon, 1),
        nth(year, 10, Weekday::Mon, 2),
        fixed(11, 11),
        nth(year, 11, Weekday::Thu, 4),
        fixed(12, 25),
    ];
    if year >= 2021 {
        days.push(fixed(6, 19));
    }
    days.sort_unstable();
    days
}

/// Distinct autumn Saturdays (September to November) split into two
/// kinds of game day.
pub fn game_days<R: Rng>(year: i32, first: usize, second: usize, rng: &mut R) -> (Vec<NaiveDate>, Vec<NaiveDate>) {
    let mut saturdays: Vec<NaiveDate> = NaiveDate::from_ymd_opt(year, 9, 1)
        .expect("valid date")
        .iter_days()
        .take_while(|d| d.month() <= 11)
        .filter(|d| d.weekday() == Weekday::Sat)
        .collect();
    saturdays.shuffle(rng);
    let mut a: Vec<NaiveDate> = saturdays.iter().take(first).copied().collect();
    let mut b: Vec<NaiveDate> = saturdays.iter().skip(first).take(second).copied().collect();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn holidays_2021() {
        let d = |m, day| NaiveDate::from_ymd_opt(2021, m, day).unwrap();
        let h = federal_holidays(2021);
        assert_eq!(h.len(), 11);
        // Independence Day on a Sunday is observed on Monday
        assert!(h.contains(&d(7, 5)));
        assert!(h.contains(&d(11, 25)));
        assert!(h.contains(&d(5, 31)));
        // Christmas on a Saturday is observed on Friday
        assert!(h.contains(&d(12, 24)));
    }

    #[test]
    fn game_days_are_disjoint_saturdays() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = game_days(2020, 7, 6, &mut rng);
        assert_eq!((a.len(), b.len()), (7, 6));
        assert!(a.iter().chain(&b).all(|d| d.weekday() == Weekday::Sat && (9..=11).contains(&d.month())));
        assert!(a.iter().all(|d| !b.contains(d)));
    }
}
