//! Physical network model: base stations, clients, a content catalog and
//! Zipf-distributed request workloads.

pub mod station;
pub mod trace;
pub mod zipf;

pub use station::{bs_load, BaseStation};
pub use trace::{generate_trace, sample_request, NetworkConfig, Request, RequestTrace, Workload};
pub use zipf::{zipf_pmf, ContentCatalog, DiscreteSampler, ZipfParams};
