//! Conversion of a feature-space certified radius into an input-space one.
//!
//! For a candidate input radius `ρ`, CROWN bounds every feature coordinate
//! over the ball; the per-coordinate deviations `L_i ≤ f_i(x+δ) − f_i(x) ≤ U_i`
//! give the upper bound `R_F' = sqrt(Σ max(L_i², U_i²))` on the feature
//! movement. Bisection on `ρ` keeps the largest radius whose bound stays
//! strictly below the feature radius.

use serde::{Deserialize, Serialize};

use crate::crown::propagate_bounds;
use crate::error::{check_dim, Error, Result};
use crate::nn::AffineNetwork;

/// Bisection bracket and precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub rho_low_init: f64,
    /// Meaningful for pixel values in `[0, 1]`; raise it for other scales.
    pub rho_high_init: f64,
    pub beta: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { rho_low_init: 0.0, rho_high_init: 10.0, beta: 0.001 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho_low_init >= 0.0
            && self.rho_low_init < self.rho_high_init
            && self.rho_high_init.is_finite()
            && self.beta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid search configuration {self:?}")))
        }
    }

    /// `⌈log2((ρ_high − ρ_low) / β)⌉`, the number of bisection rounds.
    pub fn rounds(&self) -> usize {
        let ratio = (self.rho_high_init - self.rho_low_init) / self.beta;
        if ratio <= 1.0 {
            0
        } else {
            ratio.log2().ceil() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub radius: f64,
    pub rounds: usize,
    /// No midpoint passed; the radius is the bracket's lower end.
    pub degenerate: bool,
}

/// Bisects `[rho_low_init, rho_high_init]` for the largest radius accepted by
/// `holds`, stopping once the bracket is no wider than `beta`.
pub fn bisect<F>(cfg: &SearchConfig, mut holds: F) -> Result<Bisection>
where
    F: FnMut(f64) -> Result<bool>,
{
    cfg.validate()?;
    let (mut low, mut high) = (cfg.rho_low_init, cfg.rho_high_init);
    let mut rounds = 0;
    let mut any_pass = false;
    while high - low > cfg.beta {
        let mid = 0.5 * (low + high);
        if holds(mid)? {
            low = mid;
            any_pass = true;
        } else {
            high = mid;
        }
        rounds += 1;
    }
    Ok(Bisection { radius: low, rounds, degenerate: !any_pass })
}

/// Per-coordinate feature deviation bounds over an input ball.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistanceBound {
    pub per_dim_low: Vec<f64>,
    pub per_dim_high: Vec<f64>,
    pub rf_prime: f64,
}

pub fn feature_distance_upper_bound(
    encoder: &AffineNetwork,
    x: &[f64],
    rho: f64,
) -> Result<FeatureDistanceBound> {
    check_dim(encoder.input_dim(), x.len())?;
    let d = encoder.output_dim();
    if rho == 0.0 {
        return Ok(FeatureDistanceBound {
            per_dim_low: vec![0.0; d],
            per_dim_high: vec![0.0; d],
            rf_prime: 0.0,
        });
    }
    let clean = encoder.forward(x)?;
    let (min_lower, max_upper) = propagate_bounds(encoder, x, rho)?.concretize(x, rho);
    // The clean point is inside the ball, so L_i <= 0 <= U_i up to rounding.
    let per_dim_low: Vec<f64> =
        min_lower.iter().zip(&clean).map(|(lo, f)| (lo - f).min(0.0)).collect();
    let per_dim_high: Vec<f64> =
        max_upper.iter().zip(&clean).map(|(hi, f)| (hi - f).max(0.0)).collect();
    let rf_prime = per_dim_low
        .iter()
        .zip(&per_dim_high)
        .map(|(l, u)| (l * l).max(u * u))
        .sum::<f64>()
        .sqrt();
    Ok(FeatureDistanceBound { per_dim_low, per_dim_high, rf_prime })
}

/// Input-space certified radius for a feature-space radius `feature_radius`.
///
/// For every `‖δ‖₂ <` the returned radius, `‖f(x+δ) − f(x)‖₂ < feature_radius`.
/// A bound equal to the feature radius counts as a violation.
pub fn f2i_radius(
    encoder: &AffineNetwork,
    x: &[f64],
    feature_radius: f64,
    cfg: &SearchConfig,
) -> Result<Bisection> {
    if !(feature_radius > 0.0 && feature_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "feature radius {feature_radius} must be positive and finite"
        )));
    }
    cfg.validate()?;
    check_dim(encoder.input_dim(), x.len())?;
    let fits = |rho: f64| -> Result<bool> {
        Ok(feature_distance_upper_bound(encoder, x, rho)?.rf_prime < feature_radius)
    };
    if !fits(cfg.rho_low_init)? {
        return Ok(Bisection { radius: cfg.rho_low_init, rounds: 0, degenerate: true });
    }
    bisect(cfg, fits)
}
