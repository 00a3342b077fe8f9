//! Fixed (non-trainable) expansion bases for the interpretable stacks.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Backcast and forecast basis matrices. Row `i` of `forecast` is the
/// `i`-th basis function sampled at horizon steps `0..H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPair<T> {
    /// `n_theta_b x L`
    pub backcast: Array2<T>,
    /// `n_theta_f x H`
    pub forecast: Array2<T>,
}

fn polynomial<T: Scalar>(degree: usize, len: usize) -> Array2<T> {
    Array2::from_shape_fn((degree + 1, len), |(i, t)| {
        T::lit((t as f64 / len as f64).powi(i as i32))
    })
}

fn fourier<T: Scalar>(harmonics: usize, len: usize) -> Array2<T> {
    Array2::from_shape_fn((2 * harmonics + 1, len), |(row, t)| {
        if row == 0 {
            return T::one();
        }
        let k = ((row + 1) / 2) as f64;
        let angle = 2.0 * PI * k * t as f64 / len as f64;
        T::lit(if row % 2 == 1 { angle.cos() } else { angle.sin() })
    })
}

/// Polynomial trend basis: rows `(t/len)^i` for `i = 0..=degree`.
pub fn trend_basis<T: Scalar>(degree: usize, lookback: usize, horizon: usize) -> BasisPair<T> {
    BasisPair {
        backcast: polynomial(degree, lookback),
        forecast: polynomial(degree, horizon),
    }
}

/// Fourier basis: a constant row followed by `cos(2πkt/len), sin(2πkt/len)`
/// for `k = 1..=harmonics`.
pub fn seasonality_basis<T: Scalar>(harmonics: usize, lookback: usize, horizon: usize) -> BasisPair<T> {
    BasisPair {
        backcast: fourier(harmonics, lookback),
        forecast: fourier(harmonics, horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trend() {
        let b = trend_basis::<f64>(0, 4, 3);
        assert_eq!(b.forecast, ndarray::arr2(&[[1.0, 1.0, 1.0]]));
        assert_eq!(b.backcast.shape(), &[1, 4]);
    }

    #[test]
    fn quadratic_trend_rows() {
        let b = trend_basis::<f64>(2, 4, 3);
        let expect = [[1.0, 1.0, 1.0], [0.0, 1.0 / 3.0, 2.0 / 3.0], [0.0, 1.0 / 9.0, 4.0 / 9.0]];
        for (i, row) in expect.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                assert!((b.forecast[[i, t]] - v).abs() < 1e-15);
            }
        }
        assert_eq!(b, trend_basis::<f64>(2, 4, 3));
    }

    #[test]
    fn fourier_rows() {
        let b = seasonality_basis::<f64>(1, 8, 4);
        assert_eq!(b.forecast.nrows(), 3);
        let cos = [1.0, 0.0, -1.0, 0.0];
        for t in 0..4 {
            assert!((b.forecast[[1, t]] - cos[t]).abs() < 1e-12);
        }
        let b3 = seasonality_basis::<f32>(3, 12, 6);
        assert_eq!(b3.forecast.nrows(), 7);
        assert_eq!(b3.backcast.shape(), &[7, 12]);
        for k in 0..3 {
            assert_eq!(b3.forecast[[1 + 2 * k, 0]], 1.0);
            assert_eq!(b3.forecast[[2 + 2 * k, 0]], 0.0);
        }
    }
}
