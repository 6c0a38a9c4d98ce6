//! Encoder-as-a-service server.
//!
//! A [`Service`] wraps one loaded encoder and answers two kinds of query:
//! the feature vector of an image, and the conversion of a feature-space
//! certified radius into an input-space one around an image. Images whose
//! resolution differs from the encoder's are resized by a bilinear linear
//! map folded into the encoder, so certified radii stay in the caller's
//! input space. [`http`] exposes the service as JSON over HTTP.

pub mod config;
pub mod http;
pub mod ledger;
mod service;
pub mod wire;

pub use config::ServiceConfig;
pub use ledger::{LedgerSnapshot, QueryCounts, QueryLedger};
pub use service::{Service, ServiceError};

impl Service {
    /// Loads the model named by `cfg` and checks it against the expected input.
    pub fn from_config(cfg: &ServiceConfig) -> anyhow::Result<Self> {
        let encoder = reaas_core::io::load_model(&cfg.model_path)
            .map_err(|e| anyhow::anyhow!("loading {}: {e}", cfg.model_path.display()))?;
        Ok(Self::new(encoder, cfg.expected_input, cfg.search)?)
    }
}
