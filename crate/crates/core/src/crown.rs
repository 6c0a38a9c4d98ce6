//! CROWN linear bound propagation over an ℓ2 input ball.
//!
//! For a ReLU network `N` and the closed ball `B(x₀, ρ) = {x : ‖x − x₀‖₂ ≤ ρ}`
//! this module produces, for every output `i`, two affine functions of the
//! input with `lower_i(x) ≤ N_i(x) ≤ upper_i(x)` on the whole ball.
//!
//! Pre-activation intervals for each hidden layer are obtained by running the
//! same backward pass to the input for that layer and taking the closed-form
//! extrema of the resulting lines over the ball. Unstable neurons (`l < 0 < u`)
//! are relaxed with the chord `u (z − l) / (u − l)` from above and `s·z` from
//! below, with `s = 1` when `u ≥ |l|` and `s = 0` otherwise. Stable neurons
//! are passed through exactly.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::f2i::{bisect, SearchConfig};
use crate::nn::{argmax, AffineLayer, AffineNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

/// Exact extremum of `coeffs · x + offset` over the closed ℓ2 ball of radius
/// `rho` around `center`: `coeffs · center + offset ± rho ‖coeffs‖₂`.
pub fn ball_extremum(
    coeffs: &[f64],
    offset: f64,
    center: &[f64],
    rho: f64,
    direction: Direction,
) -> f64 {
    debug_assert_eq!(coeffs.len(), center.len());
    extremum(ArrayView1::from(coeffs), offset, ArrayView1::from(center), rho, direction)
}

fn extremum(
    coeffs: ArrayView1<'_, f64>,
    offset: f64,
    center: ArrayView1<'_, f64>,
    rho: f64,
    direction: Direction,
) -> f64 {
    let value = coeffs.dot(&center) + offset;
    if rho == 0.0 {
        return value;
    }
    let norm = coeffs.dot(&coeffs).sqrt();
    match direction {
        Direction::Max => value + rho * norm,
        Direction::Min => value - rho * norm,
    }
}

/// Per-output affine lower and upper bounds, as functions of the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingLines {
    pub lower_coeffs: Array2<f64>,
    pub lower_offset: Array1<f64>,
    pub upper_coeffs: Array2<f64>,
    pub upper_offset: Array1<f64>,
}

impl BoundingLines {
    pub fn out_dim(&self) -> usize {
        self.lower_offset.len()
    }

    pub fn lower_at(&self, x: &[f64]) -> Vec<f64> {
        (self.lower_coeffs.dot(&ArrayView1::from(x)) + &self.lower_offset).to_vec()
    }

    pub fn upper_at(&self, x: &[f64]) -> Vec<f64> {
        (self.upper_coeffs.dot(&ArrayView1::from(x)) + &self.upper_offset).to_vec()
    }

    /// `(min over the ball of each lower line, max over the ball of each upper line)`.
    pub fn concretize(&self, center: &[f64], rho: f64) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.concretize_view(ArrayView1::from(center), rho);
        (lo.to_vec(), hi.to_vec())
    }

    fn concretize_view(&self, center: ArrayView1<'_, f64>, rho: f64) -> (Array1<f64>, Array1<f64>) {
        let lo = self
            .lower_coeffs
            .axis_iter(Axis(0))
            .zip(&self.lower_offset)
            .map(|(a, &c)| extremum(a, c, center, rho, Direction::Min))
            .collect();
        let hi = self
            .upper_coeffs
            .axis_iter(Axis(0))
            .zip(&self.upper_offset)
            .map(|(a, &c)| extremum(a, c, center, rho, Direction::Max))
            .collect();
        (lo, hi)
    }
}

/// Interval of one hidden layer's pre-activations over the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PreactivationInterval {
    pub low: Array1<f64>,
    pub high: Array1<f64>,
}

/// Linear relaxation of one ReLU layer.
#[derive(Debug, Clone)]
struct Relaxation {
    upper_slope: Array1<f64>,
    upper_intercept: Array1<f64>,
    lower_slope: Array1<f64>,
}

impl Relaxation {
    fn from_interval(interval: &PreactivationInterval) -> Self {
        let n = interval.low.len();
        let mut upper_slope = Array1::zeros(n);
        let mut upper_intercept = Array1::zeros(n);
        let mut lower_slope = Array1::zeros(n);
        for i in 0..n {
            let (l, u) = (interval.low[i], interval.high[i]);
            if u <= 0.0 {
                // inactive: zero map
            } else if l >= 0.0 {
                upper_slope[i] = 1.0;
                lower_slope[i] = 1.0;
            } else {
                let s = u / (u - l);
                upper_slope[i] = s;
                upper_intercept[i] = -s * l;
                lower_slope[i] = if u >= -l { 1.0 } else { 0.0 };
            }
        }
        Self { upper_slope, upper_intercept, lower_slope }
    }
}

/// The relaxed network for one `(center, rho)` pair; reusable for several
/// output specifications.
#[derive(Debug, Clone)]
pub struct CrownAnalysis<'a> {
    net: &'a AffineNetwork,
    center: Array1<f64>,
    rho: f64,
    intervals: Vec<PreactivationInterval>,
    relaxations: Vec<Relaxation>,
}

impl<'a> CrownAnalysis<'a> {
    pub fn new(net: &'a AffineNetwork, center: &[f64], rho: f64) -> Result<Self> {
        check_dim(net.input_dim(), center.len())?;
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius {rho} must be finite and >= 0")));
        }
        let mut analysis = Self {
            net,
            center: Array1::from(center.to_vec()),
            rho,
            intervals: Vec::with_capacity(net.depth().saturating_sub(1)),
            relaxations: Vec::with_capacity(net.depth().saturating_sub(1)),
        };
        for j in 0..net.depth() - 1 {
            let lines = analysis.backward(j, None);
            let (low, high) = lines.concretize_view(analysis.center.view(), rho);
            if !low.iter().chain(high.iter()).all(|v| v.is_finite()) {
                return Err(Error::Propagation { layer: j });
            }
            let interval = PreactivationInterval { low, high };
            analysis.relaxations.push(Relaxation::from_interval(&interval));
            analysis.intervals.push(interval);
        }
        Ok(analysis)
    }

    pub fn intervals(&self) -> &[PreactivationInterval] {
        &self.intervals
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Bounding lines for every network output.
    pub fn output_lines(&self) -> Result<BoundingLines> {
        let lines = self.backward(self.net.depth() - 1, None);
        self.check_finite(lines)
    }

    /// Bounding lines for `spec · N(x)`, with `spec` of shape `(m, output_dim)`.
    pub fn spec_lines(&self, spec: &Array2<f64>) -> Result<BoundingLines> {
        check_dim(self.net.output_dim(), spec.ncols())?;
        let lines = self.backward(self.net.depth() - 1, Some(spec));
        self.check_finite(lines)
    }

    fn check_finite(&self, lines: BoundingLines) -> Result<BoundingLines> {
        let finite = lines
            .lower_coeffs
            .iter()
            .chain(lines.upper_coeffs.iter())
            .chain(lines.lower_offset.iter())
            .chain(lines.upper_offset.iter())
            .all(|v| v.is_finite());
        if finite {
            Ok(lines)
        } else {
            Err(Error::Propagation { layer: self.net.depth() - 1 })
        }
    }

    /// Backward pass from the output of layer `last` to the input, using the
    /// relaxations of all ReLUs before it.
    fn backward(&self, last: usize, spec: Option<&Array2<f64>>) -> BoundingLines {
        let layers: &[AffineLayer] = &self.net.layers()[..=last];
        let top = &layers[last];
        let (mut upper_a, mut upper_c) = match spec {
            Some(s) => (s.dot(top.weight()), s.dot(top.bias())),
            None => (top.weight().clone(), top.bias().clone()),
        };
        let (mut lower_a, mut lower_c) = (upper_a.clone(), upper_c.clone());

        for k in (0..last).rev() {
            let relax = &self.relaxations[k];
            let up_s = relax.upper_slope.view().insert_axis(Axis(0));
            let lo_s = relax.lower_slope.view().insert_axis(Axis(0));

            let pos = upper_a.mapv(|v| v.max(0.0));
            let neg = upper_a.mapv(|v| v.min(0.0));
            upper_c += &pos.dot(&relax.upper_intercept);
            upper_a = &pos * &up_s + &neg * &lo_s;

            let pos = lower_a.mapv(|v| v.max(0.0));
            let neg = lower_a.mapv(|v| v.min(0.0));
            lower_c += &neg.dot(&relax.upper_intercept);
            lower_a = &pos * &lo_s + &neg * &up_s;

            let layer = &layers[k];
            upper_c += &upper_a.dot(layer.bias());
            upper_a = upper_a.dot(layer.weight());
            lower_c += &lower_a.dot(layer.bias());
            lower_a = lower_a.dot(layer.weight());
        }
        BoundingLines {
            lower_coeffs: lower_a,
            lower_offset: lower_c,
            upper_coeffs: upper_a,
            upper_offset: upper_c,
        }
    }
}

/// Bounding lines for every output of `net`, valid for `‖x − center‖₂ ≤ rho`.
pub fn propagate_bounds(net: &AffineNetwork, center: &[f64], rho: f64) -> Result<BoundingLines> {
    CrownAnalysis::new(net, center, rho)?.output_lines()
}

/// How the certified-radius condition compares class scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginRule {
    /// Bound `N_y − N_l` directly for each rival `l` and require a positive
    /// lower bound. Exact for linear classifiers.
    #[default]
    Difference,
    /// Require `min lower_y > max upper_l` for every rival `l`, bounding each
    /// logit separately.
    SeparateLogits,
}

/// Predicted label and certified feature-space radius of a base classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcCertificate {
    pub label: usize,
    pub radius: f64,
}

/// Largest radius (to `cfg.beta`) at which CROWN proves the clean argmax of
/// `classifier` at `v` cannot change.
pub fn bc_feature_radius(
    classifier: &AffineNetwork,
    v: &[f64],
    cfg: &SearchConfig,
    rule: MarginRule,
) -> Result<BcCertificate> {
    cfg.validate()?;
    let logits = classifier.forward(v)?;
    let label = argmax(&logits);
    let classes = logits.len();
    if classes == 1 {
        return Ok(BcCertificate { label, radius: cfg.rho_high_init });
    }

    let spec = {
        let mut s = Array2::zeros((classes - 1, classes));
        for (row, l) in (0..classes).filter(|&l| l != label).enumerate() {
            s[[row, label]] = 1.0;
            s[[row, l]] = -1.0;
        }
        s
    };
    let certified = |rho: f64| -> Result<bool> {
        let analysis = CrownAnalysis::new(classifier, v, rho)?;
        match rule {
            MarginRule::Difference => {
                let lines = analysis.spec_lines(&spec)?;
                let (lo, _) = lines.concretize(v, rho);
                Ok(lo.iter().all(|&m| m > 0.0))
            }
            MarginRule::SeparateLogits => {
                let lines = analysis.output_lines()?;
                let (lo, hi) = lines.concretize(v, rho);
                Ok((0..classes).filter(|&l| l != label).all(|l| lo[label] > hi[l]))
            }
        }
    };
    if !certified(0.0)? {
        return Ok(BcCertificate { label, radius: 0.0 });
    }
    let outcome = bisect(cfg, certified)?;
    Ok(BcCertificate { label, radius: outcome.radius })
}
