//! Client-side query accounting, split by training and testing phase.

use std::sync::atomic::{AtomicU64, Ordering};

use reaas_core::data::ImageShape;
use reaas_service::QueryCounts;
use serde::{Deserialize, Serialize};

use crate::api::{ClientError, EncoderService};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Training,
    Testing,
}

#[derive(Debug, Default)]
pub struct ClientLedger {
    // [training feature, training f2i, testing feature, testing f2i]
    counts: [AtomicU64; 4],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub training: QueryCounts,
    pub testing: QueryCounts,
}

impl PhaseCounts {
    pub fn training_total(&self) -> u64 {
        self.training.feature_calls + self.training.f2i_calls
    }

    pub fn testing_total(&self) -> u64 {
        self.testing.feature_calls + self.testing.f2i_calls
    }
}

impl ClientLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(phase: Phase, f2i: bool) -> usize {
        (phase == Phase::Testing) as usize * 2 + f2i as usize
    }

    pub fn snapshot(&self) -> PhaseCounts {
        let get = |i: usize| self.counts[i].load(Ordering::Relaxed);
        PhaseCounts {
            training: QueryCounts { feature_calls: get(0), f2i_calls: get(1) },
            testing: QueryCounts { feature_calls: get(2), f2i_calls: get(3) },
        }
    }

    /// A service handle that records every successful call under `phase`.
    pub fn meter<'a>(&'a self, service: &'a dyn EncoderService, phase: Phase) -> Metered<'a> {
        Metered { inner: service, ledger: self, phase }
    }
}

pub struct Metered<'a> {
    inner: &'a dyn EncoderService,
    ledger: &'a ClientLedger,
    phase: Phase,
}

impl Metered<'_> {
    fn bump(&self, f2i: bool) {
        self.ledger.counts[ClientLedger::slot(self.phase, f2i)].fetch_add(1, Ordering::Relaxed);
    }

    pub fn feature(&self, shape: ImageShape, pixels: &[f64]) -> Result<Vec<f64>, ClientError> {
        let v = self.inner.feature(shape, pixels)?;
        self.bump(false);
        Ok(v)
    }

    pub fn f2i(&self, shape: ImageShape, pixels: &[f64], feature_radius: f64) -> Result<f64, ClientError> {
        let r = self.inner.f2i(shape, pixels, feature_radius)?;
        self.bump(true);
        Ok(r)
    }
}

/// Queries per input for one run, in the shape of a cost-comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRates {
    pub per_training_input: f64,
    pub per_testing_input: f64,
}

impl QueryRates {
    pub fn from_counts(counts: &PhaseCounts, n_train: usize, n_test: usize) -> Self {
        let rate = |q: u64, n: usize| if n == 0 { 0.0 } else { q as f64 / n as f64 };
        Self {
            per_training_input: rate(counts.training_total(), n_train),
            per_testing_input: rate(counts.testing_total(), n_test),
        }
    }
}
