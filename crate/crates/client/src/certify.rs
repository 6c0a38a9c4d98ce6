//! Certification of a downstream classifier through the service.

use rayon::prelude::*;
use reaas_core::crown::{bc_feature_radius, MarginRule};
use reaas_core::data::{ImageShape, LabeledDataset};
use reaas_core::f2i::SearchConfig;
use reaas_core::smoothing::{try_certify_smoothed, SmoothingConfig};
use reaas_core::AffineNetwork;
use serde::{Deserialize, Serialize};

use crate::api::{ClientError, EncoderService};
use crate::certificate::{Method, Mode, RadiusCertificate};
use crate::ledger::{ClientLedger, Metered, Phase};
use crate::report::RobustnessReport;
use crate::train::epoch_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    /// Bisection bracket for the feature-space BC radius.
    pub feature_search: SearchConfig,
    pub margin_rule: MarginRule,
    pub smoothing: SmoothingConfig,
    /// Evenly spaced sizes in the certified-accuracy curve.
    pub grid_points: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            feature_search: SearchConfig::default(),
            margin_rule: MarginRule::default(),
            smoothing: SmoothingConfig::default(),
            grid_points: 100,
        }
    }
}

fn check_inputs(data: &LabeledDataset, shape: ImageShape) -> Result<(), ClientError> {
    if data.dim() != shape.dim() {
        return Err(reaas_core::Error::InvalidArgument(format!(
            "dataset dim {} does not match shape {shape}",
            data.dim()
        ))
        .into());
    }
    Ok(())
}

/// Runs `one` for every input in parallel; errors become failed certificates.
fn per_input<F>(
    data: &LabeledDataset,
    method: Method,
    mode: Mode,
    one: F,
) -> Vec<RadiusCertificate>
where
    F: Fn(usize, &[f64], usize) -> Result<RadiusCertificate, ClientError> + Sync,
{
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.input(i).to_vec();
            let label = data.labels()[i];
            one(i, &x, label).unwrap_or_else(|e| {
                tracing::warn!(input = i, "certification failed: {e}");
                RadiusCertificate::failed(i, label, method, mode)
            })
        })
        .collect()
}

fn finish(
    service: &dyn EncoderService,
    ledger: &ClientLedger,
    certificates: Vec<RadiusCertificate>,
    method: Method,
    mode: Mode,
    shape: ImageShape,
    cfg: &CertifyConfig,
) -> RobustnessReport {
    RobustnessReport::assemble(
        method,
        mode,
        shape.dim(),
        certificates,
        cfg.grid_points,
        ledger.snapshot(),
        service.server_ledger(),
    )
}

fn bc_one(
    service: &Metered<'_>,
    classifier: &AffineNetwork,
    shape: ImageShape,
    cfg: &CertifyConfig,
    input_id: usize,
    x: &[f64],
    label: usize,
) -> Result<RadiusCertificate, ClientError> {
    let v = service.feature(shape, x)?;
    let bc = bc_feature_radius(classifier, &v, &cfg.feature_search, cfg.margin_rule)?;
    let input_radius = if bc.radius > 0.0 { service.f2i(shape, x, bc.radius)? } else { 0.0 };
    Ok(RadiusCertificate {
        input_id,
        label,
        predicted: Some(bc.label),
        method: Method::Bc,
        mode: Mode::Reaas,
        feature_radius: Some(bc.radius),
        input_radius: Some(input_radius),
        alpha: None,
        abstained: false,
        failed: false,
    })
}

/// One Feature-API call, CROWN on the classifier, then one F2IPerturb call
/// (skipped when the feature radius is zero).
pub fn certify_bc(
    service: &dyn EncoderService,
    ledger: &ClientLedger,
    data: &LabeledDataset,
    shape: ImageShape,
    classifier: &AffineNetwork,
    cfg: &CertifyConfig,
) -> Result<RobustnessReport, ClientError> {
    check_inputs(data, shape)?;
    cfg.feature_search.validate()?;
    let metered = ledger.meter(service, Phase::Testing);
    let certs = per_input(data, Method::Bc, Mode::Reaas, |i, x, label| {
        bc_one(&metered, classifier, shape, cfg, i, x, label)
    });
    Ok(finish(service, ledger, certs, Method::Bc, Mode::Reaas, shape, cfg))
}

/// One Feature-API call, smoothing over feature noise locally, then one
/// F2IPerturb call unless smoothing abstains.
pub fn certify_sc_reaas(
    service: &dyn EncoderService,
    ledger: &ClientLedger,
    data: &LabeledDataset,
    shape: ImageShape,
    classifier: &AffineNetwork,
    cfg: &CertifyConfig,
) -> Result<RobustnessReport, ClientError> {
    check_inputs(data, shape)?;
    cfg.smoothing.validate()?;
    let metered = ledger.meter(service, Phase::Testing);
    let certs = per_input(data, Method::Sc, Mode::Reaas, |i, x, label| {
        let v = metered.feature(shape, x)?;
        let smoothing = SmoothingConfig { seed: epoch_seed(cfg.smoothing.seed, i), ..cfg.smoothing };
        let ev = try_certify_smoothed(|z: &[f64]| classifier.predict(z), &v, &smoothing)?;
        let input_radius = match ev.radius {
            Some(rf) => Some(metered.f2i(shape, x, rf)?),
            None => None,
        };
        Ok(RadiusCertificate {
            input_id: i,
            label,
            predicted: Some(ev.predicted),
            method: Method::Sc,
            mode: Mode::Reaas,
            feature_radius: ev.radius,
            input_radius,
            alpha: Some(smoothing.alpha),
            abstained: ev.abstained(),
            failed: false,
        })
    });
    Ok(finish(service, ledger, certs, Method::Sc, Mode::Reaas, shape, cfg))
}

/// Smoothing in image space: every noisy image is one Feature-API call.
pub fn certify_sc_seaas(
    service: &dyn EncoderService,
    ledger: &ClientLedger,
    data: &LabeledDataset,
    shape: ImageShape,
    classifier: &AffineNetwork,
    cfg: &CertifyConfig,
) -> Result<RobustnessReport, ClientError> {
    check_inputs(data, shape)?;
    cfg.smoothing.validate()?;
    let metered = ledger.meter(service, Phase::Testing);
    let certs = per_input(data, Method::Sc, Mode::Seaas, |i, x, label| {
        let smoothing = SmoothingConfig { seed: epoch_seed(cfg.smoothing.seed, i), ..cfg.smoothing };
        let predict = |z: &[f64]| -> Result<usize, ClientError> {
            let v = metered.feature(shape, z)?;
            Ok(classifier.predict(&v)?)
        };
        let ev = try_certify_smoothed(predict, x, &smoothing)?;
        Ok(RadiusCertificate {
            input_id: i,
            label,
            predicted: Some(ev.predicted),
            method: Method::Sc,
            mode: Mode::Seaas,
            feature_radius: None,
            input_radius: ev.radius,
            alpha: Some(smoothing.alpha),
            abstained: ev.abstained(),
            failed: false,
        })
    });
    Ok(finish(service, ledger, certs, Method::Sc, Mode::Seaas, shape, cfg))
}

/// Dispatches on method and mode.
pub fn certify(
    service: &dyn EncoderService,
    ledger: &ClientLedger,
    data: &LabeledDataset,
    shape: ImageShape,
    classifier: &AffineNetwork,
    method: Method,
    mode: Mode,
    cfg: &CertifyConfig,
) -> Result<RobustnessReport, ClientError> {
    match (method, mode) {
        (Method::Bc, Mode::Reaas) => certify_bc(service, ledger, data, shape, classifier, cfg),
        (Method::Sc, Mode::Reaas) => certify_sc_reaas(service, ledger, data, shape, classifier, cfg),
        (Method::Sc, Mode::Seaas) => certify_sc_seaas(service, ledger, data, shape, classifier, cfg),
        (Method::Bc, Mode::Seaas) => Err(reaas_core::Error::InvalidArgument(
            "BC needs the F2IPerturb API, which SEaaS does not offer".into(),
        )
        .into()),
    }
}
