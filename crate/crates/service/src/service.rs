use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use reaas_core::data::ImageShape;
use reaas_core::f2i::{f2i_radius, SearchConfig};
use reaas_core::nn::bilinear_rescale_matrix;
use reaas_core::AffineNetwork;

use crate::ledger::{Api, LedgerSnapshot, QueryLedger};
use crate::wire::{F2iRequest, F2iResponse, FeatureRequest, FeatureResponse};

/// Request failures, each with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("image has {got} channels, the encoder expects {expected}")]
    WrongChannels { expected: usize, got: usize },
    #[error("feature radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Malformed(_) => "malformed_payload",
            Self::WrongChannels { .. } => "wrong_channels",
            Self::InvalidRadius(_) => "invalid_radius",
            Self::Internal(_) => "internal",
        }
    }

    pub fn is_client_error(&self) -> bool {
        !matches!(self, Self::Internal(_))
    }
}

/// One loaded encoder plus the ledger. The model is immutable after
/// construction; rescale-folded variants are built once per input shape.
#[derive(Debug)]
pub struct Service {
    encoder: Arc<AffineNetwork>,
    expected: ImageShape,
    search: SearchConfig,
    rescaled: Mutex<HashMap<ImageShape, Arc<AffineNetwork>>>,
    ledger: QueryLedger,
}

impl Service {
    pub fn new(
        encoder: AffineNetwork,
        expected: ImageShape,
        search: SearchConfig,
    ) -> reaas_core::Result<Self> {
        search.validate()?;
        if encoder.input_dim() != expected.dim() {
            return Err(reaas_core::Error::DimensionMismatch {
                expected: expected.dim(),
                got: encoder.input_dim(),
            });
        }
        Ok(Self {
            encoder: Arc::new(encoder),
            expected,
            search,
            rescaled: Mutex::new(HashMap::new()),
            ledger: QueryLedger::new(),
        })
    }

    pub fn expected_input(&self) -> ImageShape {
        self.expected
    }

    pub fn search(&self) -> &SearchConfig {
        &self.search
    }

    pub fn encoder(&self) -> &AffineNetwork {
        &self.encoder
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// The encoder as seen from an image of `shape`: the loaded one, or the
    /// loaded one with a bilinear resize folded into its first layer.
    pub fn encoder_for(&self, shape: ImageShape) -> Result<Arc<AffineNetwork>, ServiceError> {
        if shape == self.expected {
            return Ok(Arc::clone(&self.encoder));
        }
        if shape.channels != self.expected.channels {
            return Err(ServiceError::WrongChannels {
                expected: self.expected.channels,
                got: shape.channels,
            });
        }
        if let Some(e) = self.rescaled.lock().get(&shape) {
            return Ok(Arc::clone(e));
        }
        let e = &self.expected;
        let resize = bilinear_rescale_matrix(shape.height, shape.width, e.height, e.width, e.channels)
            .map_err(|err| ServiceError::Malformed(err.to_string()))?;
        let folded = self
            .encoder
            .precompose(resize.weight())
            .map_err(|err| ServiceError::Internal(err.to_string()))?;
        let folded = Arc::new(folded);
        self.rescaled.lock().insert(shape, Arc::clone(&folded));
        Ok(folded)
    }

    fn checked_encoder(
        &self,
        shape: ImageShape,
        pixels: &[f64],
    ) -> Result<Arc<AffineNetwork>, ServiceError> {
        if shape.dim() == 0 {
            return Err(ServiceError::Malformed(format!("empty shape {shape}")));
        }
        if pixels.len() != shape.dim() {
            return Err(ServiceError::Malformed(format!(
                "shape {shape} needs {} pixels, got {}",
                shape.dim(),
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(ServiceError::Malformed(format!("pixel {i} is not finite")));
        }
        self.encoder_for(shape)
    }

    pub fn serve_feature(
        &self,
        req: &FeatureRequest,
        client: &str,
    ) -> Result<FeatureResponse, ServiceError> {
        let enc = self.checked_encoder(req.shape, &req.pixels)?;
        let feature = enc.forward(&req.pixels).map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.ledger.record(client, Api::Feature);
        Ok(FeatureResponse { feature })
    }

    pub fn serve_f2i(&self, req: &F2iRequest, client: &str) -> Result<F2iResponse, ServiceError> {
        if !(req.feature_radius > 0.0 && req.feature_radius.is_finite()) {
            return Err(ServiceError::InvalidRadius(req.feature_radius));
        }
        let enc = self.checked_encoder(req.shape, &req.pixels)?;
        let result = f2i_radius(&enc, &req.pixels, req.feature_radius, &self.search)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.ledger.record(client, Api::F2iPerturb);
        Ok(F2iResponse { input_radius: result.radius })
    }

    pub fn ledger(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }
}
