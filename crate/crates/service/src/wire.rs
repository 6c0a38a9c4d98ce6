//! JSON request and response bodies.
//!
//! Floats are written in shortest round-trip form and parsed with full
//! precision, so every `f64` survives a round trip bit for bit.

use reaas_core::data::ImageShape;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRequest {
    pub shape: ImageShape,
    /// Channel-major pixels, `shape.dim()` values.
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResponse {
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2iRequest {
    pub shape: ImageShape,
    pub pixels: Vec<f64>,
    pub feature_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2iResponse {
    pub input_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// Header carrying the opaque client token used by the ledger.
pub const CLIENT_HEADER: &str = "x-client-id";

/// Ledger bucket for requests without a client token.
pub const ANONYMOUS: &str = "anonymous";
