use chrono::NaiveDateTime;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

/// Shape of the windows cut from a segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowLayout {
    pub lookback: usize,
    pub horizon: usize,
    /// Feature columns read over the lookback (target excluded).
    pub history_features: Vec<String>,
    /// Columns known in advance, read over the horizon.
    pub future_features: Vec<String>,
}

impl WindowLayout {
    pub fn for_matrix(m: &FeatureMatrix, lookback: usize, horizon: usize) -> WindowLayout {
        WindowLayout {
            lookback,
            horizon,
            history_features: m.columns.iter().map(|c| c.name.clone()).collect(),
            future_features: m
                .columns
                .iter()
                .filter(|c| c.future_known)
                .map(|c| c.name.clone())
                .collect(),
        }
    }
}

/// One supervised example anchored at a forecast origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedWindow {
    /// Timestamp of the last lookback row.
    pub anchor: NaiveDateTime,
    /// `L x (1 + F)`: column 0 is the target history, then every feature
    /// column of the segment, rows ordered oldest first.
    pub history: Array2<f64>,
    /// `H x F_future`: known-in-advance covariates over the horizon.
    pub future: Array2<f64>,
    /// Target over `anchor + 1 ..= anchor + H`, model units.
    pub target: Vec<f64>,
    /// The same target in raw counts.
    pub actual: Vec<f64>,
}

impl SupervisedWindow {
    pub fn lookback(&self) -> usize {
        self.history.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    /// Raw target at the anchor (the last observed value).
    pub fn target_history(&self) -> ndarray::ArrayView1<'_, f64> {
        self.history.column(0)
    }

    pub fn target_timestamps(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        (1..=self.horizon()).map(move |h| self.anchor + chrono::Duration::hours(h as i64))
    }
}

/// Cuts every window whose lookback and horizon rows are consecutive hours
/// inside `segment`. With no gaps a segment of `N` rows yields
/// `N - L - H + 1` windows.
pub fn make_windows(segment: &FeatureMatrix, lookback: usize, horizon: usize) -> Vec<SupervisedWindow> {
    let n = segment.n_rows();
    if lookback == 0 || horizon == 0 || n < lookback + horizon {
        return Vec::new();
    }
    let future_cols: Vec<usize> = segment
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.future_known)
        .map(|(j, _)| j)
        .collect();
    let f = segment.n_cols();

    (lookback - 1..n - horizon)
        .filter(|&a| segment.is_contiguous(a + 1 - lookback, a + horizon))
        .map(|a| {
            let first = a + 1 - lookback;
            let mut history = Array2::zeros((lookback, 1 + f));
            for (i, r) in (first..=a).enumerate() {
                history[[i, 0]] = segment.target[r];
            }
            history
                .slice_mut(s![.., 1..])
                .assign(&segment.data.slice(s![first..=a, ..]));
            let future = Array2::from_shape_fn((horizon, future_cols.len()), |(h, k)| {
                segment.data[[a + 1 + h, future_cols[k]]]
            });
            SupervisedWindow {
                anchor: segment.timestamps[a],
                history,
                future,
                target: segment.target[a + 1..=a + horizon].to_vec(),
                actual: segment.target_raw[a + 1..=a + horizon].to_vec(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_variant, tests::toy_table, FeatureManifest};
    use crate::preprocess::exclude_window;

    fn ds3(n: usize) -> FeatureMatrix {
        build_variant(&toy_table(n), &FeatureManifest::builtin("DS3").unwrap())
            .unwrap()
            .sequence
    }

    #[test]
    fn window_count_is_n_minus_l_minus_h_plus_one() {
        let m = ds3(40).slice_rows(0..20);
        let w = make_windows(&m, 12, 6);
        assert_eq!(w.len(), 20 - 12 - 6 + 1);
        assert!(make_windows(&m.slice_rows(0..17), 12, 6).is_empty());
        assert_eq!(make_windows(&m.slice_rows(0..18), 12, 6).len(), 1);
    }

    #[test]
    fn target_and_history_positions() {
        let m = ds3(80);
        let w = make_windows(&m, 12, 6);
        for (i, win) in w.iter().enumerate() {
            let a = i + 11;
            assert_eq!(win.anchor, m.timestamps[a]);
            assert_eq!(win.target, m.target[a + 1..=a + 6].to_vec());
            assert_eq!(win.actual, m.target_raw[a + 1..=a + 6].to_vec());
            assert_eq!(win.history[[11, 0]], m.target[a]);
            assert_eq!(win.history[[0, 1]], m.data[[a - 11, 0]]);
            let hour = m.column_index("hour").unwrap();
            let fut_hour = m.columns.iter().filter(|c| c.future_known).position(|c| c.name == "hour").unwrap();
            assert_eq!(win.future[[5, fut_hour]], m.data[[a + 6, hour]]);
            // every input timestamp precedes every target timestamp
            assert!(win.target_timestamps().all(|t| t > win.anchor));
            assert_eq!(win.target_timestamps().last().unwrap(), m.timestamps[a + 6]);
        }
        let layout = WindowLayout::for_matrix(&m, 12, 6);
        assert_eq!(w[0].history.ncols(), 1 + layout.history_features.len());
        assert_eq!(w[0].future.ncols(), layout.future_features.len());
        assert_eq!(layout.future_features.len(), 8);
    }

    #[test]
    fn windows_skip_gaps() {
        let table = toy_table(60);
        let cut_from = table.timestamps[30];
        let cut_to = table.timestamps[31];
        let gapped = exclude_window(&table, cut_from, cut_to);
        let m = build_variant(&gapped, &FeatureManifest::builtin("DS2").unwrap()).unwrap().sequence;
        let w = make_windows(&m, 5, 2);
        for win in &w {
            let first = win.anchor - chrono::Duration::hours(4);
            let last = win.anchor + chrono::Duration::hours(2);
            assert!(!(first <= cut_to && last >= cut_from), "window at {} spans the gap", win.anchor);
        }
        // boarding lags warm up again after the gap: runs of 18 and 16 rows
        assert_eq!(m.n_rows(), 34);
        assert_eq!(w.len(), (18 - 5 - 2 + 1) + (16 - 5 - 2 + 1));
    }
}
