//! Per-client query counters.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub feature_calls: u64,
    pub f2i_calls: u64,
}

#[derive(Debug, Default)]
struct Counters {
    feature: AtomicU64,
    f2i: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Api {
    Feature,
    F2iPerturb,
}

/// Counts successful queries. Totals are always the sum of the per-client
/// counts because they are computed from them.
#[derive(Debug, Default)]
pub struct QueryLedger {
    clients: RwLock<HashMap<String, Arc<Counters>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub feature_calls: u64,
    pub f2i_calls: u64,
    pub per_client: BTreeMap<String, QueryCounts>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn counters(&self, client: &str) -> Arc<Counters> {
        if let Some(c) = self.clients.read().get(client) {
            return Arc::clone(c);
        }
        Arc::clone(self.clients.write().entry(client.to_owned()).or_default())
    }

    pub fn record(&self, client: &str, api: Api) {
        let c = self.counters(client);
        match api {
            Api::Feature => c.feature.fetch_add(1, Ordering::Relaxed),
            Api::F2iPerturb => c.f2i.fetch_add(1, Ordering::Relaxed),
        };
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let per_client: BTreeMap<String, QueryCounts> = self
            .clients
            .read()
            .iter()
            .map(|(k, c)| {
                let counts = QueryCounts {
                    feature_calls: c.feature.load(Ordering::Relaxed),
                    f2i_calls: c.f2i.load(Ordering::Relaxed),
                };
                (k.clone(), counts)
            })
            .collect();
        LedgerSnapshot {
            feature_calls: per_client.values().map(|c| c.feature_calls).sum(),
            f2i_calls: per_client.values().map(|c| c.f2i_calls).sum(),
            per_client,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concurrent_records_are_conserved() {
        let ledger = Arc::new(QueryLedger::new());
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let ledger = Arc::clone(&ledger);
                std::thread::spawn(move || {
                    let client = format!("c{}", t % 3);
                    for i in 0..1000 {
                        let api = if i % 4 == 0 { Api::F2iPerturb } else { Api::Feature };
                        ledger.record(&client, api);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let s = ledger.snapshot();
        assert_eq!(s.feature_calls, 8 * 750);
        assert_eq!(s.f2i_calls, 8 * 250);
        assert_eq!(s.per_client["c0"].feature_calls, 3 * 750);
        assert_eq!(s.per_client.len(), 3);
    }

    #[test]
    fn snapshots_never_decrease() {
        let ledger = QueryLedger::new();
        let mut prev = ledger.snapshot();
        for i in 0..50 {
            ledger.record(if i % 2 == 0 { "a" } else { "b" }, Api::Feature);
            let now = ledger.snapshot();
            assert!(now.feature_calls > prev.feature_calls);
            assert!(now.f2i_calls >= prev.f2i_calls);
            prev = now;
        }
    }
}
