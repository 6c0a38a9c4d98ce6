//! Handles to the two service APIs, in-process or over HTTP.

use std::sync::Arc;
use std::time::Duration;

use reaas_core::data::ImageShape;
use reaas_service::wire::{
    ErrorBody, F2iRequest, F2iResponse, FeatureRequest, FeatureResponse, CLIENT_HEADER,
};
use reaas_service::{LedgerSnapshot, Service};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ClientError {
    /// The service could not be reached or answered with a server error.
    #[error("transport: {0}")]
    Transport(String),
    /// The service refused the request.
    #[error("rejected ({code}): {message}")]
    Rejected { code: String, message: String },
    #[error(transparent)]
    Core(Arc<reaas_core::Error>),
}

impl From<reaas_core::Error> for ClientError {
    fn from(e: reaas_core::Error) -> Self {
        Self::Core(Arc::new(e))
    }
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(_))
    }
}

/// The Feature-API and F2IPerturb-API as seen by a client.
pub trait EncoderService: Sync {
    fn feature(&self, shape: ImageShape, pixels: &[f64]) -> Result<Vec<f64>, ClientError>;

    fn f2i(&self, shape: ImageShape, pixels: &[f64], feature_radius: f64) -> Result<f64, ClientError>;

    /// Server-side ledger, when the service exposes one.
    fn server_ledger(&self) -> Option<LedgerSnapshot> {
        None
    }
}

/// Calls a [`Service`] in the same process.
#[derive(Debug, Clone)]
pub struct LocalService {
    service: Arc<Service>,
    client_id: String,
}

impl LocalService {
    pub fn new(service: Arc<Service>, client_id: impl Into<String>) -> Self {
        Self { service, client_id: client_id.into() }
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }
}

fn rejected(e: reaas_service::ServiceError) -> ClientError {
    if e.is_client_error() {
        ClientError::Rejected { code: e.code().into(), message: e.to_string() }
    } else {
        ClientError::Transport(e.to_string())
    }
}

impl EncoderService for LocalService {
    fn feature(&self, shape: ImageShape, pixels: &[f64]) -> Result<Vec<f64>, ClientError> {
        let req = FeatureRequest { shape, pixels: pixels.to_vec() };
        Ok(self.service.serve_feature(&req, &self.client_id).map_err(rejected)?.feature)
    }

    fn f2i(&self, shape: ImageShape, pixels: &[f64], feature_radius: f64) -> Result<f64, ClientError> {
        let req = F2iRequest { shape, pixels: pixels.to_vec(), feature_radius };
        Ok(self.service.serve_f2i(&req, &self.client_id).map_err(rejected)?.input_radius)
    }

    fn server_ledger(&self) -> Option<LedgerSnapshot> {
        Some(self.service.ledger())
    }
}

/// Blocking HTTP client with a retry budget for transport failures.
#[derive(Debug, Clone)]
pub struct HttpService {
    base: String,
    client_id: String,
    http: reqwest::blocking::Client,
    retries: u32,
    backoff: Duration,
}

impl HttpService {
    pub fn new(base_url: impl Into<String>, client_id: impl Into<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            base: base_url.into().trim_end_matches('/').to_owned(),
            client_id: client_id.into(),
            http,
            retries: 3,
            backoff: Duration::from_millis(50),
        })
    }

    /// Attempts after the first one before giving up on a transport error.
    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn once<Req: serde::Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .header(CLIENT_HEADER, &self.client_id)
            .json(body)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json().map_err(|e| ClientError::Transport(e.to_string()));
        }
        let err: Option<ErrorBody> = resp.json().ok();
        let (code, message) = err
            .map(|e| (e.code, e.message))
            .unwrap_or_else(|| (status.as_str().to_owned(), status.to_string()));
        if status.is_server_error() {
            Err(ClientError::Transport(format!("{code}: {message}")))
        } else {
            Err(ClientError::Rejected { code, message })
        }
    }

    fn call<Req: serde::Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ClientError> {
        let mut attempt = 0;
        loop {
            match self.once(path, body) {
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    tracing::debug!(path, attempt, "retrying after {e}");
                    std::thread::sleep(self.backoff * attempt);
                }
                other => return other,
            }
        }
    }
}

impl EncoderService for HttpService {
    fn feature(&self, shape: ImageShape, pixels: &[f64]) -> Result<Vec<f64>, ClientError> {
        let req = FeatureRequest { shape, pixels: pixels.to_vec() };
        Ok(self.call::<_, FeatureResponse>("/v1/feature", &req)?.feature)
    }

    fn f2i(&self, shape: ImageShape, pixels: &[f64], feature_radius: f64) -> Result<f64, ClientError> {
        let req = F2iRequest { shape, pixels: pixels.to_vec(), feature_radius };
        Ok(self.call::<_, F2iResponse>("/v1/f2iperturb", &req)?.input_radius)
    }

    fn server_ledger(&self) -> Option<LedgerSnapshot> {
        self.http.get(format!("{}/v1/ledger", self.base)).send().ok()?.json().ok()
    }
}
