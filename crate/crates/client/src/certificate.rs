use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Certification method: CROWN on the base classifier, or randomized smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bc,
    Sc,
}

/// REaaS uses both APIs; SEaaS offers only features, so smoothing noise goes
/// on images and each noisy image costs one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reaas,
    Seaas,
}

macro_rules! text_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }
    };
}

text_enum!(Method, Method::Bc => "bc", Method::Sc => "sc");
text_enum!(Mode, Mode::Reaas => "reaas", Mode::Seaas => "seaas");

/// Outcome of certifying one test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCertificate {
    pub input_id: usize,
    pub label: usize,
    /// `None` when the input failed before a prediction was made.
    pub predicted: Option<usize>,
    pub method: Method,
    pub mode: Mode,
    pub feature_radius: Option<f64>,
    /// ℓ2 radius in the client's input space.
    pub input_radius: Option<f64>,
    pub alpha: Option<f64>,
    pub abstained: bool,
    /// Service unreachable after the retry budget, or the request was refused.
    pub failed: bool,
}

impl RadiusCertificate {
    pub(crate) fn failed(input_id: usize, label: usize, method: Method, mode: Mode) -> Self {
        Self {
            input_id,
            label,
            predicted: None,
            method,
            mode,
            feature_radius: None,
            input_radius: None,
            alpha: None,
            abstained: false,
            failed: true,
        }
    }

    /// Correct, certified and not failed.
    pub fn is_correct(&self) -> bool {
        !self.failed && !self.abstained && self.predicted == Some(self.label)
    }

    /// The input radius if the certificate counts toward certified accuracy,
    /// otherwise `None`.
    pub fn certified_radius(&self) -> Option<f64> {
        if self.is_correct() {
            Some(self.input_radius.unwrap_or(0.0))
        } else {
            None
        }
    }

    /// Checks the field invariants for the method and mode.
    pub fn is_well_formed(&self) -> bool {
        let alpha_ok = match self.method {
            Method::Bc => self.alpha.is_none(),
            Method::Sc => self.alpha.is_some() || self.failed,
        };
        let radii_ok = match (self.mode, self.input_radius) {
            (Mode::Reaas, Some(_)) => self.feature_radius.is_some(),
            (Mode::Seaas, _) => self.feature_radius.is_none(),
            (Mode::Reaas, None) => true,
        };
        alpha_ok && radii_ok && !(self.abstained && self.input_radius.is_some())
    }

    /// `(ℓ1, ℓ∞)` radii implied by the ℓ2 radius on a `dim`-dimensional input.
    pub fn lp_radii(&self, dim: usize) -> Option<(f64, f64)> {
        self.input_radius.map(|r| lp_from_l2(r, dim))
    }
}

/// ℓ1 radius `r` and ℓ∞ radius `r/√dim` certified by an ℓ2 radius `r`.
pub fn lp_from_l2(r: f64, dim: usize) -> (f64, f64) {
    (r, r / (dim as f64).sqrt())
}
