//! Deterministic digital-network-twin simulation library.
//!
//! Three pipelines are provided on top of a shared learning core:
//! safe reinforcement-learning edge caching with state/action/reward
//! intervention modules ([`cacheenv`], [`twin`], [`safety`]), clustered
//! synchronous/asynchronous federated twinning ([`fedtwin`]), and
//! Byzantine-robust federated RL for three-car following ([`driveenv`],
//! [`securefrl`]). [`harness`] runs configured experiments end to end.

pub mod cacheenv;
pub mod driveenv;
pub mod error;
pub mod fedtwin;
pub mod harness;
pub mod learncore;
pub mod netmodel;
pub mod safety;
pub mod scalar;
pub mod securefrl;
pub mod twin;

pub use error::{Error, Result};
pub use scalar::Real;

/// Single-precision aliases used by the simulations.
pub type ParamVec = learncore::ParamVector<f32>;
pub type QNetwork = learncore::Mlp<f32>;
pub type Agent = learncore::DqnAgent<f32>;
