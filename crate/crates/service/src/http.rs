//! HTTP transport: `POST /v1/feature`, `POST /v1/f2iperturb`, `GET /v1/ledger`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::ledger::LedgerSnapshot;
use crate::service::{Service, ServiceError};
use crate::wire::{ErrorBody, F2iRequest, FeatureRequest, ANONYMOUS, CLIENT_HEADER};

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/feature", post(feature))
        .route("/v1/f2iperturb", post(f2i))
        .route("/v1/ledger", get(ledger))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(service)
}

fn client_id(headers: &HeaderMap) -> String {
    headers
        .get(CLIENT_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .unwrap_or(ANONYMOUS)
        .to_owned()
}

fn error_response(status: StatusCode, code: &str, message: String) -> Response {
    (status, Json(ErrorBody { code: code.into(), message })).into_response()
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = if self.is_client_error() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        error_response(status, self.code(), self.to_string())
    }
}

/// Runs `work` on the blocking pool and logs the outcome with its latency.
async fn handle<T, F>(endpoint: &'static str, client: String, work: F) -> Response
where
    T: serde::Serialize + Send + 'static,
    F: FnOnce(&str) -> Result<T, ServiceError> + Send + 'static,
{
    let start = Instant::now();
    let c = client.clone();
    let outcome = tokio::task::spawn_blocking(move || work(&c)).await;
    let latency_us = start.elapsed().as_micros() as u64;
    match outcome {
        Ok(Ok(body)) => {
            tracing::info!(endpoint, client, latency_us, status = 200, "request served");
            Json(body).into_response()
        }
        Ok(Err(err)) => {
            tracing::warn!(endpoint, client, latency_us, code = err.code(), "request rejected");
            err.into_response()
        }
        Err(join) => {
            tracing::error!(endpoint, client, latency_us, "worker failed: {join}");
            ServiceError::Internal("worker failed".into()).into_response()
        }
    }
}

fn bad_json(endpoint: &'static str, rejection: JsonRejection) -> Response {
    tracing::warn!(endpoint, "malformed body: {rejection}");
    error_response(StatusCode::BAD_REQUEST, "malformed_payload", rejection.body_text())
}

async fn feature(
    State(service): State<Arc<Service>>,
    headers: HeaderMap,
    body: Result<Json<FeatureRequest>, JsonRejection>,
) -> Response {
    match body {
        Ok(Json(req)) => {
            handle("feature", client_id(&headers), move |c| service.serve_feature(&req, c)).await
        }
        Err(r) => bad_json("feature", r),
    }
}

async fn f2i(
    State(service): State<Arc<Service>>,
    headers: HeaderMap,
    body: Result<Json<F2iRequest>, JsonRejection>,
) -> Response {
    match body {
        Ok(Json(req)) => {
            handle("f2iperturb", client_id(&headers), move |c| service.serve_f2i(&req, c)).await
        }
        Err(r) => bad_json("f2iperturb", r),
    }
}

async fn ledger(State(service): State<Arc<Service>>) -> Json<LedgerSnapshot> {
    Json(service.ledger())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own thread and runtime, for embedding in
/// synchronous programs and tests. Dropping the handle stops it.
pub struct BackgroundServer {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(service: Arc<Service>, addr: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let svc = Arc::clone(&service);
        let thread = std::thread::Builder::new().name("reaas-http".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = TcpListener::from_std(std_listener)?;
                serve(listener, svc, async {
                    let _ = stopped.await;
                })
                .await
            })
        })?;
        Ok(Self { addr, service, stop: Some(stop), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
