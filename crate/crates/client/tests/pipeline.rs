use std::sync::Arc;
use std::time::Duration;

use ndarray::{Array1, Array2};
use reaas_client::{
    certify, certify_sc_reaas, train_downstream, CertifyConfig, ClientLedger, DownstreamConfig,
    HttpService, LocalService, Method, Mode,
};
use reaas_core::data::{ImageShape, LabeledDataset, SyntheticTask};
use reaas_core::f2i::SearchConfig;
use reaas_core::smoothing::SmoothingConfig;
use reaas_core::{AffineLayer, AffineNetwork};
use reaas_service::Service;

fn identity_encoder(dim: usize) -> AffineNetwork {
    AffineNetwork::new(vec![AffineLayer::new(Array2::eye(dim), Array1::zeros(dim)).unwrap()]).unwrap()
}

/// Always predicts class 0.
fn constant_classifier(dim: usize, classes: usize) -> AffineNetwork {
    let mut b = Array1::zeros(classes);
    b[0] = 1.0;
    AffineNetwork::new(vec![AffineLayer::new(Array2::zeros((classes, dim)), b).unwrap()]).unwrap()
}

fn small_data(shape: ImageShape, n: usize, seed: u64) -> LabeledDataset {
    SyntheticTask::new(3, shape.channels, 4).unwrap().generate(n, shape, seed).unwrap()
}

fn small_config() -> DownstreamConfig {
    let mut cfg = DownstreamConfig::default();
    cfg.hidden = vec![16];
    cfg.train.epochs = 4;
    cfg.train.batch_size = 8;
    cfg
}

#[test]
fn constant_classifier_sc_radius_passes_through_f2i() {
    let shape = ImageShape::new(2, 2, 1);
    let service = Arc::new(Service::new(identity_encoder(4), shape, SearchConfig::default()).unwrap());
    let local = LocalService::new(service, "t");
    let ledger = ClientLedger::new();
    let data = LabeledDataset::from_rows(&[vec![0.2, 0.4, 0.6, 0.8]], vec![0], 3).unwrap();
    let cfg = CertifyConfig {
        smoothing: SmoothingConfig { n_samples: 100, sigma: 0.5, alpha: 0.001, seed: 0 },
        ..CertifyConfig::default()
    };
    let rep = certify_sc_reaas(&local, &ledger, &data, shape, &constant_classifier(4, 3), &cfg).unwrap();
    let c = &rep.certificates[0];
    let rf = c.feature_radius.unwrap();
    assert!((rf - 0.75024).abs() < 1e-4, "{rf}");
    // Identity on four values: the Frobenius bound divides by two.
    assert!((c.input_radius.unwrap() - rf / 2.0).abs() <= 1e-3);
    assert_eq!(ledger.snapshot().testing_total(), 2);
}

#[test]
fn abstention_costs_one_query() {
    let shape = ImageShape::new(2, 2, 1);
    let service = Arc::new(Service::new(identity_encoder(4), shape, SearchConfig::default()).unwrap());
    let local = LocalService::new(Arc::clone(&service), "t");
    let ledger = ClientLedger::new();
    let data = small_data(shape, 6, 1);
    // Five unanimous votes cannot push the bound past one half at this alpha.
    let cfg = CertifyConfig {
        smoothing: SmoothingConfig { n_samples: 5, sigma: 0.5, alpha: 0.001, seed: 0 },
        ..CertifyConfig::default()
    };
    let rep = certify_sc_reaas(&local, &ledger, &data, shape, &constant_classifier(4, 3), &cfg).unwrap();
    assert!(rep.certificates.iter().all(|c| c.abstained && c.input_radius.is_none()));
    let counts = ledger.snapshot();
    assert_eq!(counts.testing.feature_calls, 6);
    assert_eq!(counts.testing.f2i_calls, 0);
    assert_eq!(service.ledger().f2i_calls, 0);
    assert_eq!(rep.acr, 0.0);
}

#[test]
fn reaas_bc_rates_and_server_agreement() {
    let shape = ImageShape::new(4, 4, 1);
    let encoder = AffineNetwork::random(&[16, 12, 6], &mut rand_chacha_rng(3)).unwrap();
    let service = Arc::new(Service::new(encoder, shape, SearchConfig::default()).unwrap());
    let local = LocalService::new(Arc::clone(&service), "t");
    let ledger = ClientLedger::new();
    let train = small_data(shape, 30, 1);
    let test = small_data(shape, 8, 2);
    let g = train_downstream(&local, &ledger, &train, shape, Method::Bc, Mode::Reaas, &small_config()).unwrap();
    let after_training = ledger.snapshot();
    assert_eq!(after_training.training.feature_calls, 30);
    assert_eq!(after_training.testing_total(), 0);
    let rep = certify(&local, &ledger, &test, shape, &g, Method::Bc, Mode::Reaas, &CertifyConfig::default()).unwrap();
    let counts = ledger.snapshot();
    let skipped = rep.certificates.iter().filter(|c| c.feature_radius == Some(0.0)).count() as u64;
    assert_eq!(counts.testing.feature_calls, 8);
    assert_eq!(counts.testing.f2i_calls, 8 - skipped);
    let server = rep.server_ledger.unwrap();
    assert_eq!(server.feature_calls, 38);
    assert_eq!(server.f2i_calls, counts.testing.f2i_calls);
    assert!(rep.certificates.iter().all(|c| c.is_well_formed()));
}

#[test]
fn seaas_is_deterministic_under_a_seed() {
    let shape = ImageShape::new(4, 4, 1);
    let encoder = AffineNetwork::random(&[16, 8], &mut rand_chacha_rng(5)).unwrap();
    let service = Arc::new(Service::new(encoder, shape, SearchConfig::default()).unwrap());
    let train = small_data(shape, 12, 1);
    let test = small_data(shape, 4, 2);
    let cfg = CertifyConfig {
        smoothing: SmoothingConfig { n_samples: 200, sigma: 0.25, alpha: 0.001, seed: 9 },
        ..CertifyConfig::default()
    };
    let run = || {
        let local = LocalService::new(Arc::clone(&service), "t");
        let ledger = ClientLedger::new();
        let g = train_downstream(&local, &ledger, &train, shape, Method::Sc, Mode::Seaas, &small_config()).unwrap();
        let rep = certify(&local, &ledger, &test, shape, &g, Method::Sc, Mode::Seaas, &cfg).unwrap();
        assert_eq!(ledger.snapshot().training.feature_calls, 12 * 4);
        assert_eq!(ledger.snapshot().testing.feature_calls, 200 * 4);
        (g, rep.certificates)
    };
    let (g1, c1) = run();
    let (g2, c2) = run();
    assert_eq!(g1, g2);
    assert_eq!(c1, c2);
}

#[test]
fn bc_is_rejected_without_f2i() {
    let shape = ImageShape::new(2, 2, 1);
    let service = Arc::new(Service::new(identity_encoder(4), shape, SearchConfig::default()).unwrap());
    let local = LocalService::new(service, "t");
    let data = small_data(shape, 4, 1);
    let ledger = ClientLedger::new();
    assert!(train_downstream(&local, &ledger, &data, shape, Method::Bc, Mode::Seaas, &small_config()).is_err());
    let cfg = CertifyConfig::default();
    let g = constant_classifier(4, 3);
    assert!(certify(&local, &ledger, &data, shape, &g, Method::Bc, Mode::Seaas, &cfg).is_err());
}

#[test]
fn unreachable_server_yields_failed_certificates() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let http = HttpService::new(format!("http://127.0.0.1:{port}"), "t")
        .unwrap()
        .with_retries(1, Duration::from_millis(1));
    let shape = ImageShape::new(2, 2, 1);
    let data = small_data(shape, 3, 1);
    let ledger = ClientLedger::new();
    let rep = certify(&http, &ledger, &data, shape, &constant_classifier(4, 3), Method::Bc, Mode::Reaas, &CertifyConfig::default())
        .unwrap();
    assert!(rep.certificates.iter().all(|c| c.failed && c.certified_radius().is_none()));
    assert_eq!(ledger.snapshot().testing_total(), 0);
    assert_eq!(rep.acr, 0.0);
}

fn rand_chacha_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
