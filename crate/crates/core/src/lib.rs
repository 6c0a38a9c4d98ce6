//! Networks, bounds and certification primitives for representation
//! encoders served as a black box.
//!
//! - [`nn`]: ReLU networks built from affine layers, plus training.
//! - [`crown`]: linear bound propagation over an ℓ2 ball.
//! - [`f2i`]: feature-space to input-space radius conversion.
//! - [`smoothing`]: randomized-smoothing certification.
//! - [`spectral`]: spectral-norm regularized pre-training.
//! - [`attack`]: empirical attacks for sanity checks.
//! - [`io`], [`data`]: file formats and the synthetic image task.

pub mod attack;
pub mod crown;
pub mod data;
pub mod error;
pub mod f2i;
pub mod io;
pub mod nn;
pub mod smoothing;
pub mod spectral;

pub use error::{Error, Result};
pub use nn::{AffineLayer, AffineNetwork};
