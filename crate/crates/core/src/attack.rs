//! Empirical ℓ2 attacks used to sanity-check certified radii.
//!
//! These only ever find counterexamples; failing to find one proves nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::nn::{argmax, AffineNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { restarts: 4, steps: 40, seed: 0 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform point in the ℓ2 ball of the given radius.
pub fn sample_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&d);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    if n > 0.0 {
        d.iter_mut().for_each(|x| *x *= r / n);
    }
    d
}

fn project(delta: &mut [f64], radius: f64) {
    let n = norm(delta);
    if n > radius {
        delta.iter_mut().for_each(|x| *x *= radius / n);
    }
}

fn shifted(x: &[f64], delta: &[f64]) -> Vec<f64> {
    x.iter().zip(delta).map(|(a, b)| a + b).collect()
}

/// Normalized-gradient ascent on `objective` within the ball of radius
/// `budget` around `x`. `step` returns the objective and its gradient at a
/// point. Stops early once `done` holds. Returns the best perturbation seen.
fn pgd<S, D>(x: &[f64], budget: f64, cfg: &AttackConfig, mut step: S, done: D) -> Result<(f64, Vec<f64>)>
where
    S: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    D: Fn(f64) -> bool,
{
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidArgument(format!("attack budget {budget}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let alpha = 2.5 * budget / cfg.steps.max(1) as f64;
    let mut best = (f64::NEG_INFINITY, vec![0.0; x.len()]);
    for restart in 0..cfg.restarts.max(1) {
        let mut delta = if restart == 0 {
            vec![0.0; x.len()]
        } else {
            sample_in_ball(x.len(), budget, &mut rng)
        };
        for _ in 0..=cfg.steps {
            let (value, grad) = step(&shifted(x, &delta))?;
            if value > best.0 {
                best = (value, delta.clone());
            }
            if done(value) {
                return Ok(best);
            }
            let g = norm(&grad);
            if g == 0.0 {
                // Flat spot: jitter instead of stalling.
                let kick = sample_in_ball(x.len(), alpha, &mut rng);
                delta.iter_mut().zip(kick).for_each(|(d, k)| *d += k);
            } else {
                delta.iter_mut().zip(&grad).for_each(|(d, gi)| *d += alpha * gi / g);
            }
            project(&mut delta, budget);
        }
    }
    Ok(best)
}

/// Searches for `δ` with `‖δ‖ ≤ budget` that changes `net`'s prediction away
/// from `label`. Returns the perturbation if found.
pub fn find_label_flip(
    net: &AffineNetwork,
    x: &[f64],
    label: usize,
    budget: f64,
    cfg: &AttackConfig,
) -> Result<Option<Vec<f64>>> {
    check_dim(net.input_dim(), x.len())?;
    if label >= net.output_dim() {
        return Err(Error::InvalidArgument(format!("label {label} out of range")));
    }
    if net.output_dim() == 1 {
        return Ok(None);
    }
    let step = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let logits = net.forward(p)?;
        let rival = (0..logits.len())
            .filter(|&c| c != label)
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .expect("at least two classes");
        let mut cot = vec![0.0; logits.len()];
        cot[rival] = 1.0;
        cot[label] = -1.0;
        Ok((logits[rival] - logits[label], net.input_gradient(p, &cot)?))
    };
    let (_, delta) = pgd(x, budget, cfg, step, |v| v > 0.0)?;
    let pred = argmax(&net.forward(&shifted(x, &delta))?);
    Ok((pred != label).then_some(delta))
}

/// Largest feature displacement `‖f(x+δ) − f(x)‖` found within the budget.
pub fn max_feature_shift(
    encoder: &AffineNetwork,
    x: &[f64],
    budget: f64,
    cfg: &AttackConfig,
) -> Result<f64> {
    check_dim(encoder.input_dim(), x.len())?;
    let base = encoder.forward(x)?;
    let step = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let f = encoder.forward(p)?;
        let diff: Vec<f64> = f.iter().zip(&base).map(|(a, b)| a - b).collect();
        Ok((norm(&diff), encoder.input_gradient(p, &diff)?))
    };
    let (best, _) = pgd(x, budget, cfg, step, |_| false)?;
    Ok(best.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AffineLayer;
    use ndarray::{array, Array1};

    fn linear(w: ndarray::Array2<f64>) -> AffineNetwork {
        AffineNetwork::new(vec![AffineLayer::linear(w).unwrap()]).unwrap()
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!(norm(&sample_in_ball(5, 0.3, &mut rng)) <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn flips_linear_margin_just_past_its_radius() {
        // Margin (x0 - x1) at (1, 0) is 1; exact flip radius is 1/√2.
        let net = linear(array![[1.0, 0.0], [0.0, 1.0]]);
        let cfg = AttackConfig::default();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(find_label_flip(&net, &[1.0, 0.0], 0, r * 0.99, &cfg).unwrap().is_none());
        let d = find_label_flip(&net, &[1.0, 0.0], 0, r * 1.05, &cfg).unwrap().unwrap();
        assert!(norm(&d) <= r * 1.05 + 1e-12);
    }

    #[test]
    fn feature_shift_of_linear_map_reaches_operator_norm() {
        let enc = linear(array![[3.0, 0.0], [0.0, 1.0]]);
        let got = max_feature_shift(&enc, &[0.2, 0.1], 0.5, &AttackConfig::default()).unwrap();
        assert!(got <= 1.5 + 1e-12 && got > 1.5 - 1e-3, "{got}");
    }

    #[test]
    fn feature_shift_escapes_a_flat_start() {
        // Dead ReLU at the centre; the jitter path must still find movement.
        let l1 = AffineLayer::new(array![[1.0]], Array1::from(vec![0.0])).unwrap();
        let l2 = AffineLayer::new(array![[2.0]], Array1::from(vec![0.0])).unwrap();
        let enc = AffineNetwork::new(vec![l1, l2]).unwrap();
        let got = max_feature_shift(&enc, &[0.0], 1.0, &AttackConfig::default()).unwrap();
        assert!(got > 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let net = linear(array![[1.0, 0.0], [0.0, 1.0]]);
        let cfg = AttackConfig::default();
        assert!(find_label_flip(&net, &[1.0], 0, 0.1, &cfg).is_err());
        assert!(find_label_flip(&net, &[1.0, 0.0], 2, 0.1, &cfg).is_err());
        assert!(max_feature_shift(&net, &[1.0, 0.0], -1.0, &cfg).is_err());
    }
}
