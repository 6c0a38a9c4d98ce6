use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use reaas_service::{http, Service, ServiceConfig};
use tracing_subscriber::EnvFilter;

/// Serve an encoder's Feature and F2IPerturb APIs over HTTP.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Emit logs as JSON lines.
    #[arg(long)]
    json_logs: bool,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    if args.json_logs {
        tracing_subscriber::fmt().json().with_env_filter(filter).init();
    } else {
        tracing_subscriber::fmt().with_env_filter(filter).init();
    }

    let cfg = ServiceConfig::load(&args.config)?.with_env_overrides();
    let service = Arc::new(Service::from_config(&cfg)?);
    tracing::info!(
        model = %cfg.model_path.display(),
        input = %cfg.expected_input,
        feature_dim = service.feature_dim(),
        "model loaded"
    );

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.listen_address)
            .await
            .with_context(|| format!("binding {}", cfg.listen_address))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        http::serve(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
