use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reaas_client::{
    certify, train_downstream, CertifyConfig, ClientLedger, DownstreamConfig, EncoderService,
    HttpService, LocalService, Method, Mode, RobustnessReport,
};
use reaas_core::data::{ImageShape, LabeledDataset, SyntheticTask};
use reaas_core::f2i::SearchConfig;
use reaas_core::io::{load_dataset, load_model, save_dataset, save_model};
use reaas_core::nn::TrainConfig;
use reaas_core::smoothing::SmoothingConfig;
use reaas_core::spectral::{pretrain_encoder, SpectralConfig};
use reaas_core::AffineNetwork;
use reaas_service::Service;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "reaas", version, about = "Train and certify classifiers on a remote encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic image dataset.
    GenData(GenData),
    /// Pre-train an encoder with the spectral-norm penalty.
    Pretrain(Pretrain),
    /// Train a downstream classifier on served features.
    TrainDownstream(TrainDownstreamArgs),
    /// Certify a downstream classifier and write a JSON report.
    Certify(CertifyArgs),
    /// Turn a JSON report into summary, curve and ledger files.
    Report(ReportArgs),
    /// Train and certify SC classifiers for several noise levels.
    SigmaSweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value = "16x16x1")]
    shape: ImageShape,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Seed of the class templates; keep it fixed to draw more data from the same task.
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct Pretrain {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Encoder widths after the input; the last one is the feature dimension.
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0.00075)]
    lambda: f64,
    #[arg(long, default_value_t = 10)]
    power_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ServiceArgs {
    /// Base URL of a running server.
    #[arg(long, conflicts_with = "encoder")]
    server: Option<String>,
    /// Encoder model to serve in-process instead of over HTTP.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Native input shape of the in-process encoder (defaults to the data shape).
    #[arg(long)]
    encoder_shape: Option<ImageShape>,
    /// Input-space bisection bracket and precision for the in-process encoder.
    #[arg(long, default_value_t = 10.0)]
    input_rho_high: f64,
    #[arg(long, default_value_t = 0.001)]
    beta: f64,
    #[arg(long, default_value = "reaas-cli")]
    client_id: String,
    #[arg(long, default_value_t = 3)]
    retries: u32,
}

impl ServiceArgs {
    fn connect(&self, data_shape: ImageShape) -> Result<Box<dyn EncoderService>> {
        match (&self.server, &self.encoder) {
            (Some(url), _) => Ok(Box::new(
                HttpService::new(url.clone(), self.client_id.clone())?
                    .with_retries(self.retries, Duration::from_millis(100)),
            )),
            (None, Some(path)) => {
                let encoder = load_model(path).with_context(|| format!("loading {}", path.display()))?;
                let search =
                    SearchConfig { rho_low_init: 0.0, rho_high_init: self.input_rho_high, beta: self.beta };
                let shape = self.encoder_shape.unwrap_or(data_shape);
                let service = Service::new(encoder, shape, search)?;
                Ok(Box::new(LocalService::new(Arc::new(service), self.client_id.clone())))
            }
            (None, None) => bail!("pass --server URL or --encoder MODEL"),
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Image shape of the dataset rows.
    #[arg(long)]
    shape: ImageShape,
    /// Use only the first N inputs.
    #[arg(long)]
    limit: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<LabeledDataset> {
        let data = load_dataset(&self.data).with_context(|| format!("loading {}", self.data.display()))?;
        if data.dim() != self.shape.dim() {
            bail!("dataset rows have {} values, shape {} needs {}", data.dim(), self.shape, self.shape.dim());
        }
        Ok(match self.limit {
            Some(n) => data.head(n),
            None => data,
        })
    }
}

#[derive(Debug, Args)]
struct DownstreamArgs {
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 0.06)]
    lr: f64,
    #[arg(long, default_value_t = 512)]
    batch: usize,
}

impl DownstreamArgs {
    fn config(&self, sigma: f64, seed: u64) -> DownstreamConfig {
        DownstreamConfig {
            hidden: self.hidden.clone(),
            train: TrainConfig {
                epochs: self.epochs,
                lr: self.lr,
                batch_size: self.batch,
                noise_sigma: None,
                seed,
            },
            sigma,
        }
    }
}

#[derive(Debug, Args)]
struct TrainDownstreamArgs {
    #[arg(long, default_value = "bc")]
    method: Method,
    #[arg(long, default_value = "reaas")]
    mode: Mode,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    service: ServiceArgs,
    #[command(flatten)]
    downstream: DownstreamArgs,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SmoothingArgs {
    #[arg(long = "samples", default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
    /// Upper end of the feature-space bisection bracket for BC.
    #[arg(long, default_value_t = 10.0)]
    feature_rho_high: f64,
    #[arg(long, default_value_t = 100)]
    grid: usize,
}

impl SmoothingArgs {
    fn config(&self, sigma: f64, seed: u64, beta: f64) -> CertifyConfig {
        CertifyConfig {
            feature_search: SearchConfig { rho_low_init: 0.0, rho_high_init: self.feature_rho_high, beta },
            smoothing: SmoothingConfig { n_samples: self.n, sigma, alpha: self.alpha, seed },
            grid_points: self.grid,
            ..CertifyConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long, default_value = "bc")]
    method: Method,
    #[arg(long, default_value = "reaas")]
    mode: Mode,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    service: ServiceArgs,
    #[arg(long)]
    classifier: PathBuf,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Recompute the curve on this many evenly spaced sizes.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value = "reaas")]
    mode: Mode,
    #[arg(long, value_delimiter = ',', default_value = "0.125,0.25,0.5,0.75,1")]
    sigmas: Vec<f64>,
    /// Training data.
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    service: ServiceArgs,
    #[command(flatten)]
    downstream: DownstreamArgs,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> Result<()> {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match Cli::parse().command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => pretrain(a),
        Command::TrainDownstream(a) => train(a),
        Command::Certify(a) => run_certify(a),
        Command::Report(a) => report(a),
        Command::SigmaSweep(a) => sweep(a),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let task = SyntheticTask::new(a.classes, a.shape.channels, a.task_seed)?;
    let data = task.generate(a.count, a.shape, a.seed)?;
    save_dataset(&data, &a.out)?;
    tracing::info!(count = a.count, shape = %a.shape, out = %a.out.display(), "dataset written");
    Ok(())
}

fn pretrain(a: Pretrain) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let mut dims = vec![data.dim()];
    dims.extend(&a.hidden);
    dims.push(data.num_classes());
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let net = AffineNetwork::random(&dims, &mut rng)?;
    let train = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch,
        noise_sigma: None,
        seed: a.seed,
    };
    let spectral = SpectralConfig { lambda: a.lambda, power_iters: a.power_iters };
    let out = pretrain_encoder(&net, &data, &spectral, &train)?;
    save_model(&out.encoder, &a.out)?;
    println!(
        "{}",
        serde_json::json!({
            "encoder": a.out,
            "per_layer_spectral_norms": out.profile.per_layer_norms,
            "lipschitz_bound": out.profile.product,
        })
    );
    Ok(())
}

fn train(a: TrainDownstreamArgs) -> Result<()> {
    let data = a.data.load()?;
    let service = a.service.connect(a.data.shape)?;
    let ledger = ClientLedger::new();
    let cfg = a.downstream.config(a.sigma, a.seed);
    let net = train_downstream(service.as_ref(), &ledger, &data, a.data.shape, a.method, a.mode, &cfg)?;
    save_model(&net, &a.out)?;
    let counts = ledger.snapshot();
    println!(
        "{}",
        serde_json::json!({
            "classifier": a.out,
            "training_inputs": data.len(),
            "ledger": counts,
            "queries_per_training_input": counts.training_total() as f64 / data.len() as f64,
        })
    );
    Ok(())
}

fn run_certify(a: CertifyArgs) -> Result<()> {
    let data = a.data.load()?;
    let service = a.service.connect(a.data.shape)?;
    let classifier = load_model(&a.classifier)?;
    let ledger = ClientLedger::new();
    let cfg = a.smoothing.config(a.smoothing.sigma, a.seed, a.service.beta);
    let report = certify(service.as_ref(), &ledger, &data, a.data.shape, &classifier, a.method, a.mode, &cfg)?;
    std::fs::write(&a.out, report.to_json()?)?;
    println!("{}", serde_json::to_string_pretty(&report.summary())?);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.report)?;
    let mut report = RobustnessReport::from_json(&text)?;
    if let Some(grid) = a.grid {
        report = RobustnessReport::assemble(
            report.method,
            report.mode,
            report.input_dim,
            report.certificates,
            grid,
            report.ledger,
            report.server_ledger,
        );
    }
    report.write_files(&a.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&report.summary())?);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let train_data = load_dataset(&a.train)?;
    let test_data = a.data.load()?;
    let service = a.service.connect(a.data.shape)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut best: Option<(f64, f64)> = None;
    let mut rows = Vec::new();
    for &sigma in &a.sigmas {
        let ledger = ClientLedger::new();
        let cfg = a.downstream.config(sigma, a.seed);
        let net = train_downstream(service.as_ref(), &ledger, &train_data, a.data.shape, Method::Sc, a.mode, &cfg)?;
        let ccfg = a.smoothing.config(sigma, a.seed, a.service.beta);
        let report = certify(service.as_ref(), &ledger, &test_data, a.data.shape, &net, Method::Sc, a.mode, &ccfg)?;
        std::fs::write(a.out_dir.join(format!("report_sigma_{sigma}.json")), report.to_json()?)?;
        tracing::info!(sigma, acr = report.acr, "sigma done");
        rows.push(serde_json::json!({ "sigma": sigma, "acr": report.acr }));
        if best.is_none_or(|(_, acr)| report.acr > acr) {
            best = Some((sigma, report.acr));
        }
    }
    let (sigma, acr) = best.context("no sigma given")?;
    println!("{}", serde_json::json!({ "runs": rows, "best_sigma": sigma, "best_acr": acr }));
    Ok(())
}
