use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{affine_rows, AffineNetwork};
use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};

/// Per-layer `(dW, db)` pairs, same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &AffineNetwork) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weight().raw_dim()), Array1::zeros(l.out_dim())))
            .collect();
        Self { layers }
    }
}

/// Mean softmax cross-entropy over the rows of `inputs` and its gradient.
pub fn loss_and_gradients(
    net: &AffineNetwork,
    inputs: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    check_dim(net.input_dim(), inputs.ncols())?;
    check_dim(inputs.nrows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let classes = net.output_dim();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} outputs"
        )));
    }

    let layers = net.layers();
    // activations[k] is the input of layer k; preacts[k] its output.
    let mut activations = Vec::with_capacity(layers.len());
    let mut preacts = Vec::with_capacity(layers.len());
    let mut h = inputs.clone();
    for (k, layer) in layers.iter().enumerate() {
        let z = affine_rows(layer, &h);
        activations.push(h);
        h = if k + 1 < layers.len() { z.mapv(super::relu) } else { z.clone() };
        preacts.push(z);
    }
    let logits = preacts.last().expect("non-empty");

    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut delta = Array2::zeros(logits.raw_dim());
    for (i, (row, &y)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for (j, &v) in row.iter().enumerate() {
            delta[[i, j]] = (v - lse).exp() / batch;
        }
        delta[[i, y]] -= 1.0 / batch;
    }
    loss /= batch;

    let mut grads = Gradients::zeros_like(net);
    for k in (0..layers.len()).rev() {
        grads.layers[k].0 = delta.t().dot(&activations[k]);
        grads.layers[k].1 = delta.sum_axis(Axis(0));
        if k > 0 {
            let mut back = delta.dot(layers[k].weight());
            back.zip_mut_with(&preacts[k - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            delta = back;
        }
    }
    Ok((loss, grads))
}

/// Extra penalty added to the mini-batch objective.
pub trait Regularizer {
    /// Adds the penalty's gradient into `grads` and returns the penalty value.
    fn apply(&mut self, net: &AffineNetwork, grads: &mut Gradients) -> f64;
}

/// The absent regularizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRegularizer;

impl Regularizer for NoRegularizer {
    fn apply(&mut self, _net: &AffineNetwork, _grads: &mut Gradients) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Standard deviation of Gaussian noise added to every input in every epoch.
    pub noise_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 25, lr: 0.06, batch_size: 512, noise_sigma: None, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise sigma {s} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_penalty: f64,
}

/// Mini-batch gradient descent on softmax cross-entropy.
///
/// Epochs are driven one at a time so a caller can feed a different dataset
/// each epoch (e.g. features re-queried for freshly noised images).
pub struct Trainer<R: Regularizer = NoRegularizer> {
    net: AffineNetwork,
    cfg: TrainConfig,
    regularizer: R,
    shuffle_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer<NoRegularizer> {
    pub fn new(net: AffineNetwork, cfg: TrainConfig) -> Result<Self> {
        Trainer::with_regularizer(net, cfg, NoRegularizer)
    }
}

impl<R: Regularizer> Trainer<R> {
    pub fn with_regularizer(net: AffineNetwork, cfg: TrainConfig, regularizer: R) -> Result<Self> {
        cfg.validate()?;
        let shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        noise_rng.set_stream(1);
        Ok(Self { net, cfg, regularizer, shuffle_rng, noise_rng, epoch: 0 })
    }

    pub fn network(&self) -> &AffineNetwork {
        &self.net
    }

    pub fn regularizer(&self) -> &R {
        &self.regularizer
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn run_epoch(&mut self, data: &LabeledDataset) -> Result<EpochStats> {
        check_dim(self.net.input_dim(), data.dim())?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("training data is empty".into()));
        }
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);

        let sigma = self.cfg.noise_sigma.filter(|&s| s > 0.0);
        let (mut loss_sum, mut penalty_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(self.cfg.batch_size) {
            let mut inputs = data.inputs().select(Axis(0), chunk);
            if let Some(sigma) = sigma {
                inputs.mapv_inplace(|v| {
                    let n: f64 = StandardNormal.sample(&mut self.noise_rng);
                    v + sigma * n
                });
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let (loss, mut grads) = loss_and_gradients(&self.net, &inputs, &labels)?;
            let penalty = self.regularizer.apply(&self.net, &mut grads);
            if !(loss + penalty).is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            self.step(&grads);
            loss_sum += loss;
            penalty_sum += penalty;
            batches += 1;
        }
        self.epoch += 1;
        let n = batches as f64;
        Ok(EpochStats { epoch, mean_loss: loss_sum / n, mean_penalty: penalty_sum / n })
    }

    fn step(&mut self, grads: &Gradients) {
        let lr = self.cfg.lr;
        for (layer, (gw, gb)) in self.net.layers_mut().iter_mut().zip(&grads.layers) {
            let (w, b) = layer.params_mut();
            w.scaled_add(-lr, gw);
            b.scaled_add(-lr, gb);
        }
    }

    /// Runs the remaining configured epochs on `data`.
    pub fn fit(&mut self, data: &LabeledDataset) -> Result<Vec<EpochStats>> {
        let mut stats = Vec::new();
        while self.epoch < self.cfg.epochs {
            stats.push(self.run_epoch(data)?);
        }
        Ok(stats)
    }

    pub fn into_parts(self) -> (AffineNetwork, R) {
        (self.net, self.regularizer)
    }
}

/// Trains `net` on `data` and returns the updated copy.
pub fn train_classifier(
    net: &AffineNetwork,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<AffineNetwork> {
    let mut trainer = Trainer::new(net.clone(), cfg.clone())?;
    trainer.fit(data)?;
    Ok(trainer.into_parts().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AffineNetwork;
    use ndarray::Array2;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let c = if y == 0 { -1.5 } else { 1.5 };
            let n1: f64 = StandardNormal.sample(&mut rng);
            let n2: f64 = StandardNormal.sample(&mut rng);
            rows.extend([c + 0.4 * n1, c + 0.4 * n2]);
            labels.push(y);
        }
        LabeledDataset::new(Array2::from_shape_vec((n, 2), rows).unwrap(), labels, 2).unwrap()
    }

    fn accuracy(net: &AffineNetwork, data: &LabeledDataset) -> f64 {
        let out = net.forward_batch(data.inputs()).unwrap();
        let hits = out
            .axis_iter(Axis(0))
            .zip(data.labels())
            .filter(|(row, &y)| crate::nn::argmax(row.as_slice().unwrap()) == y)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let data = blobs(400, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = AffineNetwork::random(&[2, 16, 2], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 25, lr: 0.1, batch_size: 32, ..Default::default() };
        let trained = train_classifier(&net, &data, &cfg).unwrap();
        assert!(accuracy(&trained, &data) >= 0.99);
    }

    #[test]
    fn zero_epochs_rejected() {
        let data = blobs(10, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = AffineNetwork::random(&[2, 2], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert!(train_classifier(&net, &data, &cfg).is_err());
        let cfg = TrainConfig { lr: 0.0, ..Default::default() };
        assert!(train_classifier(&net, &data, &cfg).is_err());
    }

    #[test]
    fn zero_noise_is_no_noise() {
        let data = blobs(64, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = AffineNetwork::random(&[2, 8, 2], &mut rng).unwrap();
        let base = TrainConfig { epochs: 3, lr: 0.05, batch_size: 8, seed: 4, noise_sigma: None };
        let zero = TrainConfig { noise_sigma: Some(0.0), ..base.clone() };
        let a = train_classifier(&net, &data, &base).unwrap();
        let b = train_classifier(&net, &data, &zero).unwrap();
        assert_eq!(a, b);
        let noisy = TrainConfig { noise_sigma: Some(0.5), ..base };
        assert_ne!(a, train_classifier(&net, &data, &noisy).unwrap());
    }

    #[test]
    fn divergence_names_epoch() {
        let data = blobs(64, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = AffineNetwork::random(&[2, 8, 2], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 50, lr: 1e200, batch_size: 8, ..Default::default() };
        match train_classifier(&net, &data, &cfg) {
            Err(Error::TrainingDiverged { epoch }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..5 {
            let mut net = AffineNetwork::random(&[3, 5, 4, 3], &mut rng).unwrap();
            for layer in net.layers_mut() {
                let (_, b) = layer.params_mut();
                b.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            }
            let inputs = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
            let labels: Vec<usize> = (0..6).map(|i| (i + trial) % 3).collect();
            let (_, grads) = loss_and_gradients(&net, &inputs, &labels).unwrap();

            let h = 1e-4;
            let loss_at = |n: &AffineNetwork| loss_and_gradients(n, &inputs, &labels).unwrap().0;
            for k in 0..net.depth() {
                let (rows, cols) = net.layers()[k].weight().dim();
                for i in 0..rows {
                    for j in 0..=cols {
                        let mut plus = net.clone();
                        let mut minus = net.clone();
                        let analytic = if j < cols {
                            plus.layers_mut()[k].params_mut().0[[i, j]] += h;
                            minus.layers_mut()[k].params_mut().0[[i, j]] -= h;
                            grads.layers[k].0[[i, j]]
                        } else {
                            plus.layers_mut()[k].params_mut().1[i] += h;
                            minus.layers_mut()[k].params_mut().1[i] -= h;
                            grads.layers[k].1[i]
                        };
                        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                        assert!(
                            (analytic - numeric).abs() / scale <= 1e-3
                                || (analytic - numeric).abs() <= 1e-8,
                            "layer {k} ({i},{j}): {analytic} vs {numeric}"
                        );
                    }
                }
            }
        }
    }
}
