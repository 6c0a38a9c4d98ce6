//! Downstream classifier training on served features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use reaas_core::data::{ImageShape, LabeledDataset};
use reaas_core::nn::{TrainConfig, Trainer};
use reaas_core::smoothing::noise_vector;
use reaas_core::AffineNetwork;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::api::{ClientError, EncoderService};
use crate::certificate::{Method, Mode};
use crate::ledger::{ClientLedger, Metered, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Gaussian noise level for SC training: on features in REaaS mode, on
    /// images in SEaaS mode. Ignored for BC.
    pub sigma: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            train: TrainConfig { epochs: 25, lr: 0.06, batch_size: 512, noise_sigma: None, seed: 0 },
            sigma: 0.5,
        }
    }
}

fn invalid(msg: String) -> ClientError {
    reaas_core::Error::InvalidArgument(msg).into()
}

/// Per-epoch seed for image-noise streams.
pub(crate) fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(epoch as u64 + 1)
}

/// Feature vectors of every input, one Feature-API call each, in input order.
pub fn featurize(
    service: &Metered<'_>,
    data: &LabeledDataset,
    shape: ImageShape,
    noise: Option<(u64, f64)>,
) -> Result<LabeledDataset, ClientError> {
    if data.dim() != shape.dim() {
        return Err(invalid(format!("dataset dim {} does not match shape {shape}", data.dim())));
    }
    let rows = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut x = data.input(i).to_vec();
            if let Some((seed, sigma)) = noise {
                let n = noise_vector(seed, i as u64, x.len(), sigma);
                x.iter_mut().zip(n).for_each(|(a, b)| *a += b);
            }
            service.feature(shape, &x)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dim = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let inputs = Array2::from_shape_vec((data.len(), dim), flat)
        .map_err(|e| invalid(format!("ragged features: {e}")))?;
    Ok(LabeledDataset::new(inputs, data.labels().to_vec(), data.num_classes())?)
}

/// Trains a classifier on features of `data` (images of `shape`).
///
/// REaaS: each training input is featurized once; SC adds fresh feature
/// noise every epoch. SEaaS (SC only): every epoch sends a freshly noised
/// copy of each image, one query per input per epoch.
pub fn train_downstream(
    service: &dyn EncoderService,
    ledger: &ClientLedger,
    data: &LabeledDataset,
    shape: ImageShape,
    method: Method,
    mode: Mode,
    cfg: &DownstreamConfig,
) -> Result<AffineNetwork, ClientError> {
    cfg.train.validate()?;
    if data.is_empty() {
        return Err(invalid("empty training set".into()));
    }
    if method == Method::Sc && !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(invalid(format!("SC training needs sigma > 0, got {}", cfg.sigma)));
    }
    if (method, mode) == (Method::Bc, Mode::Seaas) {
        return Err(invalid("BC needs the F2IPerturb API, which SEaaS does not offer".into()));
    }
    let metered = ledger.meter(service, Phase::Training);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    match mode {
        Mode::Reaas => {
            let features = featurize(&metered, data, shape, None)?;
            let mut dims = vec![features.dim()];
            dims.extend(&cfg.hidden);
            dims.push(data.num_classes());
            let net = AffineNetwork::random(&dims, &mut rng)?;
            let train = TrainConfig {
                noise_sigma: (method == Method::Sc).then_some(cfg.sigma),
                ..cfg.train.clone()
            };
            let mut trainer = Trainer::new(net, train)?;
            trainer.fit(&features)?;
            Ok(trainer.into_parts().0)
        }
        Mode::Seaas => {
            let train = TrainConfig { noise_sigma: None, ..cfg.train.clone() };
            let mut trainer: Option<Trainer> = None;
            for epoch in 0..train.epochs {
                let noise = Some((epoch_seed(train.seed, epoch), cfg.sigma));
                let features = featurize(&metered, data, shape, noise)?;
                let t = match trainer.as_mut() {
                    Some(t) => t,
                    None => {
                        let mut dims = vec![features.dim()];
                        dims.extend(&cfg.hidden);
                        dims.push(data.num_classes());
                        let net = AffineNetwork::random(&dims, &mut rng)?;
                        trainer.insert(Trainer::new(net, train.clone())?)
                    }
                };
                t.run_epoch(&features)?;
            }
            Ok(trainer.expect("at least one epoch").into_parts().0)
        }
    }
}
