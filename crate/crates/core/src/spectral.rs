//! Spectral-norm regularized pre-training.
//!
//! The encoder's Lipschitz constant is bounded by the product of the spectral
//! norms of its affine layers (ReLU is 1-Lipschitz and contributes nothing).
//! Training adds `λ · Π_j ‖W_j‖_s` to each mini-batch loss. Norms come from
//! power iteration whose state persists across mini-batches; the gradient of
//! `‖W‖_s` is taken as `u vᵀ` at the current singular-vector estimates.

use std::ops::Range;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::nn::{AffineLayer, AffineNetwork, Gradients, Regularizer, TrainConfig, Trainer};

const START_SEED: u64 = 0x5eed_0f_5bec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub lambda: f64,
    /// Power-iteration rounds per mini-batch.
    pub power_iters: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { lambda: 0.00075, power_iters: 10 }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidArgument("power_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of power iteration on one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub estimate: f64,
    /// Right singular vector estimate (the persisted state).
    pub right: Array1<f64>,
    /// `W v / ‖W v‖`, zero when the estimate is zero.
    pub left: Array1<f64>,
}

fn start_vector(dim: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    Array1::from_shape_fn(dim, |_| StandardNormal.sample(&mut rng))
}

/// `iters` rounds of `v ← normalize(Wᵀ W v)` from `state` (or a fixed
/// pseudo-random start), returning `‖W v‖` as the spectral-norm estimate.
pub fn spectral_norm_power(
    weight: &Array2<f64>,
    state: Option<&Array1<f64>>,
    iters: usize,
) -> Result<PowerEstimate> {
    if iters == 0 {
        return Err(Error::InvalidArgument("power iteration needs at least one round".into()));
    }
    let mut v = match state {
        Some(s) => {
            check_dim(weight.ncols(), s.len())?;
            s.clone()
        }
        None => start_vector(weight.ncols()),
    };
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        v = start_vector(weight.ncols());
    }
    v /= v.dot(&v).sqrt();
    for _ in 0..iters {
        let w = weight.t().dot(&weight.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        v = w / norm;
    }
    let wv = weight.dot(&v);
    let estimate = wv.dot(&wv).sqrt();
    let left = if estimate > 0.0 { wv / estimate } else { Array1::zeros(weight.nrows()) };
    Ok(PowerEstimate { estimate, right: v, left })
}

/// Per-layer spectral-norm estimates and their product.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    pub per_layer_norms: Vec<f64>,
    pub product: f64,
    pub iteration_vectors: Vec<Array1<f64>>,
}

impl SpectralProfile {
    fn from_estimates(estimates: &[PowerEstimate]) -> Self {
        let per_layer_norms: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
        Self {
            product: per_layer_norms.iter().product(),
            per_layer_norms,
            iteration_vectors: estimates.iter().map(|e| e.right.clone()).collect(),
        }
    }
}

/// Spectral profile of all layers of `net`, with `iters` power-iteration rounds each.
pub fn spectral_profile(net: &AffineNetwork, iters: usize) -> Result<SpectralProfile> {
    let estimates = net
        .layers()
        .iter()
        .map(|l| spectral_norm_power(l.weight(), None, iters))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralProfile::from_estimates(&estimates))
}

/// `λ · Π_j ‖W_j‖_s` over a contiguous range of layers.
#[derive(Debug, Clone)]
pub struct SpectralRegularizer {
    cfg: SpectralConfig,
    layers: Range<usize>,
    states: Vec<Option<Array1<f64>>>,
    last: Option<SpectralProfile>,
}

impl SpectralRegularizer {
    pub fn new(cfg: SpectralConfig, layers: Range<usize>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, states: vec![None; layers.len()], layers, last: None })
    }

    /// Profile observed at the most recent mini-batch.
    pub fn last_profile(&self) -> Option<&SpectralProfile> {
        self.last.as_ref()
    }

    /// Runs power iteration on the regularized layers, updating the state.
    pub fn estimate(&mut self, net: &AffineNetwork) -> Result<Vec<PowerEstimate>> {
        let layers = net
            .layers()
            .get(self.layers.clone())
            .ok_or_else(|| Error::InvalidArgument("regularized layers out of range".into()))?;
        let estimates = layers
            .iter()
            .zip(&self.states)
            .map(|(l, s)| spectral_norm_power(l.weight(), s.as_ref(), self.cfg.power_iters))
            .collect::<Result<Vec<_>>>()?;
        for (state, e) in self.states.iter_mut().zip(&estimates) {
            *state = Some(e.right.clone());
        }
        self.last = Some(SpectralProfile::from_estimates(&estimates));
        Ok(estimates)
    }
}

impl Regularizer for SpectralRegularizer {
    fn apply(&mut self, net: &AffineNetwork, grads: &mut Gradients) -> f64 {
        if self.cfg.lambda == 0.0 {
            return 0.0;
        }
        let estimates = match self.estimate(net) {
            Ok(e) => e,
            Err(_) => return f64::NAN,
        };
        let norms: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
        for (j, e) in estimates.iter().enumerate() {
            let others: f64 =
                norms.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, n)| n).product();
            let scale = self.cfg.lambda * others;
            let outer = e
                .left
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&e.right.view().insert_axis(ndarray::Axis(0)));
            grads.layers[self.layers.start + j].0.scaled_add(scale, &outer);
        }
        self.cfg.lambda * norms.iter().product::<f64>()
    }
}

/// Trains `net` with the spectral penalty applied to its first `regularized`
/// layers.
pub fn train_regularized(
    net: &AffineNetwork,
    data: &LabeledDataset,
    train: &TrainConfig,
    spectral: &SpectralConfig,
    regularized: usize,
) -> Result<(AffineNetwork, SpectralRegularizer)> {
    if regularized > net.depth() {
        return Err(Error::InvalidArgument(format!(
            "cannot regularize {regularized} of {} layers",
            net.depth()
        )));
    }
    let reg = SpectralRegularizer::new(*spectral, 0..regularized)?;
    let mut trainer = Trainer::with_regularizer(net.clone(), train.clone(), reg)?;
    trainer.fit(data)?;
    Ok(trainer.into_parts())
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub encoder: AffineNetwork,
    pub head: AffineLayer,
    /// Spectral profile of the returned encoder (power iteration run to
    /// convergence on the final weights).
    pub profile: SpectralProfile,
}

/// Supervised pre-training of `classifier` (encoder layers followed by one
/// output layer) with the penalty over the encoder layers; returns the
/// encoder with the head split off.
pub fn pretrain_encoder(
    classifier: &AffineNetwork,
    data: &LabeledDataset,
    spectral: &SpectralConfig,
    train: &TrainConfig,
) -> Result<PretrainOutcome> {
    if classifier.depth() < 2 {
        return Err(Error::InvalidArgument(
            "pre-training needs at least one encoder layer plus a head".into(),
        ));
    }
    let encoder_layers = classifier.depth() - 1;
    let (trained, _) = train_regularized(classifier, data, train, spectral, encoder_layers)?;
    let (encoder, head) = trained.split_head()?;
    let profile = spectral_profile(&encoder, 200)?;
    Ok(PretrainOutcome { encoder, head, profile })
}
