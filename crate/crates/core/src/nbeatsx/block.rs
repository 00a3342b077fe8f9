use ndarray::{s, Array2, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::basis::{seasonality_basis, trend_basis, BasisPair};
use super::dense::{Dense, DenseGrad};
use super::{ModelDims, StackKind, StackSpec};
use crate::scalar::Scalar;

/// One fully connected block: hidden ReLU layers, a linear head producing
/// `theta = [theta_b | theta_f]`, and the stack-specific expansion.
///
/// The first layer reads `[residual | covariates]`; its weight rows are
/// ordered the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub kind: StackKind,
    pub layers: Vec<Dense<T>>,
    pub head: Dense<T>,
    pub n_theta_b: usize,
    pub n_theta_f: usize,
    /// Fixed basis for trend and seasonality blocks.
    pub basis: Option<BasisPair<T>>,
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    /// Output of each hidden layer.
    acts: Vec<Array2<T>>,
    /// `relu'(z) * mask / (1 - p)` for each hidden layer.
    gates: Vec<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad<T> {
    pub layers: Vec<DenseGrad<T>>,
    pub head: DenseGrad<T>,
}

pub(crate) fn make_basis<T: Scalar>(spec_kind: StackKind, degree: Option<usize>, harmonics: Option<usize>, dims: ModelDims) -> Option<BasisPair<T>> {
    match spec_kind {
        StackKind::Trend => Some(trend_basis(degree.unwrap_or(0), dims.lookback, dims.horizon)),
        StackKind::Seasonality => Some(seasonality_basis(harmonics.unwrap_or(1), dims.lookback, dims.horizon)),
        StackKind::Exogenous => None,
    }
}

impl<T: Scalar> Block<T> {
    pub fn new(spec: &StackSpec, dims: ModelDims, rng: &mut ChaCha8Rng) -> Block<T> {
        let basis = make_basis::<T>(spec.kind, spec.degree, spec.harmonics, dims);
        let (n_theta_b, n_theta_f) = match &basis {
            Some(b) => (b.backcast.nrows(), b.forecast.nrows()),
            None => (dims.lookback, dims.future_features),
        };
        let mut fan_in = dims.input_width();
        let mut layers = Vec::with_capacity(spec.hidden_widths.len());
        for &w in &spec.hidden_widths {
            layers.push(Dense::init(fan_in, w, rng));
            fan_in = w;
        }
        let head = Dense::init(fan_in, n_theta_b + n_theta_f, rng);
        Block {
            kind: spec.kind,
            layers,
            head,
            n_theta_b,
            n_theta_f,
            basis,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum::<usize>() + self.head.n_params()
    }

    /// Returns `(backcast B x L, forecast B x H, cache)`. Dropout is applied
    /// after every hidden layer when `dropout` carries a generator.
    pub fn forward(
        &self,
        residual: ArrayView2<'_, T>,
        exo: ArrayView2<'_, T>,
        future: ArrayView3<'_, T>,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (Array2<T>, Array2<T>, BlockCache<T>) {
        let l = residual.ncols();
        let first = &self.layers[0];
        let mut z = residual.dot(&first.weight.slice(s![..l, ..]));
        if exo.ncols() > 0 {
            z += &exo.dot(&first.weight.slice(s![l.., ..]));
        }
        z += &first.bias;

        let mut acts: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        let mut gates = Vec::with_capacity(self.layers.len());
        let mut dropout = dropout.filter(|(p, _)| *p > 0.0);
        for i in 0..self.layers.len() {
            if i > 0 {
                z = self.layers[i].forward(acts[i - 1].view());
            }
            let mut gate = z.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
            if let Some((p, rng)) = dropout.as_mut() {
                let keep = T::lit(1.0 / (1.0 - *p));
                gate.mapv_inplace(|g| if rng.random::<f64>() < *p { T::zero() } else { g * keep });
            }
            z *= &gate;
            acts.push(z.clone());
            gates.push(gate);
        }
        let theta = self.head.forward(acts.last().expect("at least one layer").view());
        let theta_b = theta.slice(s![.., ..self.n_theta_b]);
        let theta_f = theta.slice(s![.., self.n_theta_b..]);
        let (back, fore) = match &self.basis {
            Some(b) => (theta_b.dot(&b.backcast), theta_f.dot(&b.forecast)),
            None => {
                let (bsz, h, _) = future.dim();
                let mut fore = Array2::zeros((bsz, h));
                for (i, mut out) in fore.rows_mut().into_iter().enumerate() {
                    out.assign(&future.index_axis(Axis(0), i).dot(&theta_f.row(i)));
                }
                (theta_b.to_owned(), fore)
            }
        };
        (back, fore, BlockCache { acts, gates })
    }

    /// Gradients of the parameters and of the residual input given the
    /// upstream gradients of backcast and forecast.
    pub fn backward(
        &self,
        residual: ArrayView2<'_, T>,
        exo: ArrayView2<'_, T>,
        future: ArrayView3<'_, T>,
        cache: &BlockCache<T>,
        d_back: ArrayView2<'_, T>,
        d_fore: ArrayView2<'_, T>,
    ) -> (BlockGrad<T>, Array2<T>) {
        let bsz = residual.nrows();
        let l = residual.ncols();
        let mut d_theta = Array2::zeros((bsz, self.n_theta_b + self.n_theta_f));
        match &self.basis {
            Some(b) => {
                d_theta.slice_mut(s![.., ..self.n_theta_b]).assign(&d_back.dot(&b.backcast.t()));
                d_theta.slice_mut(s![.., self.n_theta_b..]).assign(&d_fore.dot(&b.forecast.t()));
            }
            None => {
                d_theta.slice_mut(s![.., ..self.n_theta_b]).assign(&d_back);
                let mut d_theta_f = d_theta.slice_mut(s![.., self.n_theta_b..]);
                for (i, mut out) in d_theta_f.rows_mut().into_iter().enumerate() {
                    out.assign(&future.index_axis(Axis(0), i).t().dot(&d_fore.row(i)));
                }
            }
        }

        let n = self.layers.len();
        let (head_grad, mut da) = self.head.backward(cache.acts[n - 1].view(), d_theta.view());
        let mut grads: Vec<Option<DenseGrad<T>>> = vec![None; n];
        let mut d_residual = Array2::zeros((bsz, l));
        for i in (0..n).rev() {
            let dz = da * &cache.gates[i];
            if i > 0 {
                let (g, dx) = self.layers[i].backward(cache.acts[i - 1].view(), dz.view());
                grads[i] = Some(g);
                da = dx;
            } else {
                let w = &self.layers[0].weight;
                let mut gw = Array2::zeros(w.raw_dim());
                gw.slice_mut(s![..l, ..]).assign(&residual.t().dot(&dz));
                if exo.ncols() > 0 {
                    gw.slice_mut(s![l.., ..]).assign(&exo.t().dot(&dz));
                }
                grads[0] = Some(DenseGrad {
                    weight: gw,
                    bias: dz.sum_axis(Axis(0)),
                });
                d_residual = dz.dot(&w.slice(s![..l, ..]).t());
                da = Array2::zeros((0, 0));
            }
        }
        let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
        (BlockGrad { layers, head: head_grad }, d_residual)
    }
}
