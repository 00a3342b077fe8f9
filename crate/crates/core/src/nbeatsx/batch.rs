use ndarray::{Array2, Array3, Axis};

use super::ModelDims;
use crate::dataset::SupervisedWindow;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stacked model inputs for a set of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `B x L` target history, oldest first.
    pub history: Array2<T>,
    /// `B x (L*F + H*F_future)`: lookback covariates then horizon
    /// covariates, each flattened row-major.
    pub exo: Array2<T>,
    /// `B x H x F_future`
    pub future: Array3<T>,
    /// `B x H`
    pub target: Array2<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_windows(windows: &[SupervisedWindow], dims: ModelDims) -> Result<Batch<T>> {
        if windows.is_empty() {
            return Err(Error::invalid("no windows"));
        }
        let (l, h, f, ff) = (dims.lookback, dims.horizon, dims.history_features, dims.future_features);
        for w in windows {
            if w.history.dim() != (l, 1 + f) || w.future.dim() != (h, ff) || w.target.len() != h {
                return Err(Error::shape(format!(
                    "window at {} has history {:?}, future {:?}, target {}; expected ({l}, {}), ({h}, {ff}), {h}",
                    w.anchor,
                    w.history.dim(),
                    w.future.dim(),
                    w.target.len(),
                    1 + f
                )));
            }
        }
        let b = windows.len();
        let history = Array2::from_shape_fn((b, l), |(i, t)| T::lit(windows[i].history[[t, 0]]));
        let exo = Array2::from_shape_fn((b, dims.exo_width()), |(i, j)| {
            let w = &windows[i];
            if j < l * f {
                T::lit(w.history[[j / f, 1 + j % f]])
            } else {
                let k = j - l * f;
                T::lit(w.future[[k / ff, k % ff]])
            }
        });
        let future = Array3::from_shape_fn((b, h, ff), |(i, t, k)| T::lit(windows[i].future[[t, k]]));
        let target = Array2::from_shape_fn((b, h), |(i, t)| T::lit(windows[i].target[t]));
        Ok(Batch { history, exo, future, target })
    }

    pub fn len(&self) -> usize {
        self.history.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Batch<T> {
        Batch {
            history: self.history.select(Axis(0), idx),
            exo: self.exo.select(Axis(0), idx),
            future: self.future.select(Axis(0), idx),
            target: self.target.select(Axis(0), idx),
        }
    }

    pub fn dims(&self) -> ModelDims {
        let (_, h, ff) = self.future.dim();
        let l = self.history.ncols();
        ModelDims {
            lookback: l,
            horizon: h,
            history_features: (self.exo.ncols() - h * ff) / l,
            future_features: ff,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use ndarray::arr2;

    #[test]
    fn flattens_history_then_future() {
        let w = SupervisedWindow {
            anchor: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            history: arr2(&[[10.0, 1.0, 2.0], [11.0, 3.0, 4.0]]),
            future: arr2(&[[5.0], [6.0], [7.0]]),
            target: vec![12.0, 13.0, 14.0],
            actual: vec![12.0, 13.0, 14.0],
        };
        let dims = ModelDims { lookback: 2, horizon: 3, history_features: 2, future_features: 1 };
        let b: Batch<f64> = Batch::from_windows(&[w.clone(), w.clone()], dims).unwrap();
        assert_eq!(b.history.row(0).to_vec(), vec![10.0, 11.0]);
        assert_eq!(b.exo.row(1).to_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(b.future[[0, 2, 0]], 7.0);
        assert_eq!(b.dims(), dims);
        let bad = ModelDims { history_features: 3, ..dims };
        assert!(Batch::<f64>::from_windows(&[w], bad).is_err());
        assert!(Batch::<f64>::from_windows(&[], dims).is_err());
        assert_eq!(b.select(&[1]).len(), 1);
    }
}
