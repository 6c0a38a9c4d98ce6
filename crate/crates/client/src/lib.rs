//! Client side of an encoder-as-a-service deployment.
//!
//! The client owns a small downstream classifier trained on features served
//! by a remote encoder, and certifies it either by bounding the classifier
//! itself (BC) or by randomized smoothing (SC). Feature-space radii are turned
//! into input-space radii by the service. Every query is counted per phase so
//! the cost of a run can be compared against smoothing done entirely through
//! the Feature-API.

pub mod api;
pub mod certificate;
pub mod certify;
pub mod ledger;
pub mod metrics;
pub mod report;
pub mod train;

pub use api::{ClientError, EncoderService, HttpService, LocalService};
pub use certificate::{Method, Mode, RadiusCertificate};
pub use certify::{certify, certify_bc, certify_sc_reaas, certify_sc_seaas, CertifyConfig};
pub use ledger::{ClientLedger, Phase, PhaseCounts, QueryRates};
pub use report::{ReportSummary, RobustnessReport};
pub use train::{train_downstream, DownstreamConfig};
