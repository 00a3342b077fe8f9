use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::block::{make_basis, Block, BlockCache, BlockGrad};
use super::{ModelDims, NBeatsXConfig, StackKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Persisted through [`Checkpoint`](super::Checkpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct NBeatsX<T> {
    pub config: NBeatsXConfig,
    pub dims: ModelDims,
    /// All blocks in evaluation order, stack by stack.
    pub blocks: Vec<Block<T>>,
}

/// Per-stack-kind forecast contributions, each `B x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    pub total: Array2<T>,
    pub trend: Array2<T>,
    pub seasonality: Array2<T>,
    pub exogenous: Array2<T>,
}

/// Result of a forward pass with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub decomposition: Decomposition<T>,
    /// `residuals[k]` is the input residual of block `k`; the last entry is
    /// the residual left after every backcast.
    pub residuals: Vec<Array2<T>>,
    pub backcasts: Vec<Array2<T>>,
    caches: Vec<BlockCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub blocks: Vec<BlockGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat views in the same order as [`NBeatsX::params_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for g in b.layers.iter().chain(std::iter::once(&b.head)) {
                out.push(g.weight.as_slice().expect("standard layout"));
                out.push(g.bias.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar> NBeatsX<T> {
    /// Randomly initialized model; weights depend only on `config.seed`.
    pub fn new(config: NBeatsXConfig, dims: ModelDims) -> Result<NBeatsX<T>> {
        config.validate()?;
        if dims.lookback != config.lookback || dims.horizon != config.horizon {
            return Err(Error::shape(format!(
                "dims L={} H={} disagree with config L={} H={}",
                dims.lookback, dims.horizon, config.lookback, config.horizon
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut blocks = Vec::with_capacity(config.n_blocks());
        for stack in &config.stacks {
            for _ in 0..stack.blocks {
                blocks.push(Block::new(stack, dims, &mut rng));
            }
        }
        Ok(NBeatsX { config, dims, blocks })
    }

    /// Rebuilds the fixed bases, which checkpoints do not store.
    pub(crate) fn restore_bases(&mut self) {
        let mut i = 0;
        for stack in &self.config.stacks {
            for _ in 0..stack.blocks {
                self.blocks[i].basis = make_basis(stack.kind, stack.degree, stack.harmonics, self.dims);
                i += 1;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(Block::n_params).sum()
    }

    /// Mutable flat parameter views: per block, each hidden layer's weight
    /// and bias, then the head's.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            for d in b.layers.iter_mut().chain(std::iter::once(&mut b.head)) {
                out.push(d.weight.as_slice_mut().expect("standard layout"));
                out.push(d.bias.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// `(name, shape, values)` for every parameter tensor, same order as
    /// [`params_mut`](Self::params_mut).
    pub fn named_params(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            let prefix = format!("block{k}.{}", b.kind.as_str());
            for (j, d) in b.layers.iter().enumerate() {
                out.push((format!("{prefix}.layer{j}.weight"), d.weight.shape().to_vec(), d.weight.as_slice().expect("standard layout")));
                out.push((format!("{prefix}.layer{j}.bias"), d.bias.shape().to_vec(), d.bias.as_slice().expect("standard layout")));
            }
            out.push((format!("{prefix}.head.weight"), b.head.weight.shape().to_vec(), b.head.weight.as_slice().expect("standard layout")));
            out.push((format!("{prefix}.head.bias"), b.head.bias.shape().to_vec(), b.head.bias.as_slice().expect("standard layout")));
        }
        out
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let d = self.dims;
        let ok = batch.history.ncols() == d.lookback
            && batch.exo.ncols() == d.exo_width()
            && batch.future.dim().1 == d.horizon
            && batch.future.dim().2 == d.future_features
            && batch.target.ncols() == d.horizon;
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!("batch {:?} does not fit model {:?}", batch.dims(), d)))
        }
    }

    /// Doubly residual forward pass. Dropout is active iff `dropout_rng` is
    /// given and the configured rate is positive.
    pub fn forward(&self, batch: &Batch<T>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<ForwardPass<T>> {
        self.check_batch(batch)?;
        let (b, h) = (batch.len(), self.dims.horizon);
        let mut trend = Array2::zeros((b, h));
        let mut seasonality = Array2::zeros((b, h));
        let mut exogenous = Array2::zeros((b, h));
        let mut residuals = Vec::with_capacity(self.blocks.len() + 1);
        let mut backcasts = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        residuals.push(batch.history.clone());
        for block in &self.blocks {
            let drop = dropout_rng.as_deref_mut().map(|r| (self.config.dropout, r));
            let input = residuals.last().expect("seeded above");
            let (back, fore, cache) = block.forward(input.view(), batch.exo.view(), batch.future.view(), drop);
            let next = input - &back;
            match block.kind {
                StackKind::Trend => trend += &fore,
                StackKind::Seasonality => seasonality += &fore,
                StackKind::Exogenous => exogenous += &fore,
            }
            residuals.push(next);
            backcasts.push(back);
            caches.push(cache);
        }
        let total = &trend + &seasonality + &exogenous;
        Ok(ForwardPass {
            decomposition: Decomposition { total, trend, seasonality, exogenous },
            residuals,
            backcasts,
            caches,
        })
    }

    /// Mean squared error over every batch item and horizon step.
    pub fn mse(&self, prediction: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> T {
        let n = T::from_usize(target.len()).expect("batch size fits");
        (&prediction - &target).mapv(|e| e * e).sum() / n
    }

    /// Loss in inference mode.
    pub fn loss(&self, batch: &Batch<T>) -> Result<T> {
        let pass = self.forward(batch, None)?;
        Ok(self.mse(pass.decomposition.total.view(), batch.target.view()))
    }

    /// MSE loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &Batch<T>, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<(T, Gradients<T>)> {
        let pass = self.forward(batch, dropout_rng)?;
        let err = &pass.decomposition.total - &batch.target;
        let n = T::from_usize(err.len()).expect("batch size fits");
        let loss = err.mapv(|e| e * e).sum() / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                epoch: 0,
                batch: 0,
                detail: format!("loss = {loss}"),
            });
        }
        let two = T::lit(2.0);
        let d_total = err.mapv(|e| two * e / n);

        // residual_{k+1} = residual_k - backcast_k; the final residual is
        // unused, so its gradient starts at zero.
        let mut g_res: Array2<T> = Array2::zeros(batch.history.raw_dim());
        let mut grads = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.blocks.iter().enumerate().rev() {
            let d_back = g_res.mapv(|v| -v);
            let (g, d_input) = block.backward(
                pass.residuals[k].view(),
                batch.exo.view(),
                batch.future.view(),
                &pass.caches[k],
                d_back.view(),
                d_total.view(),
            );
            g_res += &d_input;
            grads.push(g);
        }
        grads.reverse();
        Ok((loss, Gradients { blocks: grads }))
    }
}
