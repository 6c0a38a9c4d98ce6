use std::fmt::Write as _;
use std::path::Path;

use reaas_service::LedgerSnapshot;
use serde::{Deserialize, Serialize};

use crate::certificate::{lp_from_l2, Method, Mode, RadiusCertificate};
use crate::ledger::PhaseCounts;
use crate::metrics::{average_certified_radius, certified_accuracy_curve, trapezoid_area, CurvePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub method: Method,
    pub mode: Mode,
    pub input_dim: usize,
    /// Ordered by `input_id`.
    pub certificates: Vec<RadiusCertificate>,
    pub acr: f64,
    pub curve: Vec<CurvePoint>,
    pub ledger: PhaseCounts,
    pub server_ledger: Option<LedgerSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub method: Method,
    pub mode: Mode,
    pub inputs: usize,
    pub correct: usize,
    pub abstained: usize,
    pub failed: usize,
    pub acr: f64,
    pub curve_area: f64,
    /// ACR expressed for ℓ1 and ℓ∞ perturbations.
    pub acr_l1: f64,
    pub acr_linf: f64,
    pub ledger: PhaseCounts,
    pub queries_per_testing_input: f64,
}

impl RobustnessReport {
    pub fn assemble(
        method: Method,
        mode: Mode,
        input_dim: usize,
        mut certificates: Vec<RadiusCertificate>,
        grid_points: usize,
        ledger: PhaseCounts,
        server_ledger: Option<LedgerSnapshot>,
    ) -> Self {
        certificates.sort_by_key(|c| c.input_id);
        Self {
            method,
            mode,
            input_dim,
            acr: average_certified_radius(&certificates),
            curve: certified_accuracy_curve(&certificates, grid_points),
            certificates,
            ledger,
            server_ledger,
        }
    }

    pub fn summary(&self) -> ReportSummary {
        let n = self.certificates.len();
        let (acr_l1, acr_linf) = lp_from_l2(self.acr, self.input_dim.max(1));
        ReportSummary {
            method: self.method,
            mode: self.mode,
            inputs: n,
            correct: self.certificates.iter().filter(|c| c.is_correct()).count(),
            abstained: self.certificates.iter().filter(|c| c.abstained).count(),
            failed: self.certificates.iter().filter(|c| c.failed).count(),
            acr: self.acr,
            curve_area: trapezoid_area(&self.curve),
            acr_l1,
            acr_linf,
            ledger: self.ledger,
            queries_per_testing_input: if n == 0 {
                0.0
            } else {
                self.ledger.testing_total() as f64 / n as f64
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Writes `summary.json`, `curve.csv`, `certificates.csv` and
    /// `ledger.json` into `dir`.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), pretty(&self.summary())?)?;
        std::fs::write(
            dir.join("ledger.json"),
            pretty(&LedgerFile { client: self.ledger, server: self.server_ledger.clone() })?,
        )?;
        let mut curve = String::from("radius,certified_accuracy\n");
        for p in &self.curve {
            let _ = writeln!(curve, "{},{}", p.radius, p.certified_accuracy);
        }
        std::fs::write(dir.join("curve.csv"), curve)?;
        let mut certs = String::from(
            "input_id,label,predicted,method,mode,feature_radius,input_radius,l1_radius,linf_radius,alpha,abstained,failed\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.certificates {
            let lp = c.lp_radii(self.input_dim.max(1));
            let _ = writeln!(
                certs,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.input_id,
                c.label,
                c.predicted.map(|p| p.to_string()).unwrap_or_default(),
                c.method,
                c.mode,
                opt(c.feature_radius),
                opt(c.input_radius),
                opt(lp.map(|l| l.0)),
                opt(lp.map(|l| l.1)),
                opt(c.alpha),
                c.abstained,
                c.failed
            );
        }
        std::fs::write(dir.join("certificates.csv"), certs)
    }
}

#[derive(Serialize)]
struct LedgerFile {
    client: PhaseCounts,
    server: Option<LedgerSnapshot>,
}

fn pretty<T: Serialize>(v: &T) -> std::io::Result<String> {
    serde_json::to_string_pretty(v).map_err(std::io::Error::other)
}
