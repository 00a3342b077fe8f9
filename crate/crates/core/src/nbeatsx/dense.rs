use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Fully connected layer `y = x W + b` applied row-wise to a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    /// `fan_in x fan_out`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseGrad<T> {
    pub fn zeros_like(layer: &Dense<T>) -> Self {
        DenseGrad {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl<T: Scalar> Dense<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            T::lit(rng.random_range(-limit..=limit))
        });
        Dense {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        x.dot(&self.weight) + &self.bias
    }

    /// Returns parameter gradients and the gradient with respect to `x`.
    pub fn backward(&self, x: ArrayView2<'_, T>, dy: ArrayView2<'_, T>) -> (DenseGrad<T>, Array2<T>) {
        let grad = DenseGrad {
            weight: x.t().dot(&dy),
            bias: dy.sum_axis(Axis(0)),
        };
        (grad, dy.dot(&self.weight.t()))
    }
}
