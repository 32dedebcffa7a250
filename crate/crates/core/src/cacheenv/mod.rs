//! Edge-caching CMDP: per-station slot caches, admission/eviction actions,
//! hit/miss rewards and an overload penalty on the windowed station load.

mod log;
mod observe;
mod state;

pub use log::{metrics, CacheMetrics, EpisodeLog, LogRow};
pub use observe::{observe, CandidateSlot, EnvObservation};
pub use state::{reset, CacheAction, CacheState, PhysicalSnapshot, StepOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::NetworkConfig;

/// Reward constants of the caching CMDP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    pub r_hit: f64,
    pub r_miss: f64,
    pub c_overload: f64,
    pub overload_threshold: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            r_hit: 1.0,
            r_miss: -1.0,
            c_overload: 2.0,
            overload_threshold: 0.8,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_hit > self.r_miss) {
            return Err(Error::invalid("r_hit must exceed r_miss"));
        }
        if !(self.c_overload >= 0.0) {
            return Err(Error::invalid("c_overload must be >= 0"));
        }
        if !(self.overload_threshold > 0.0 && self.overload_threshold <= 1.0) {
            return Err(Error::invalid("overload_threshold must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Environment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheEnvConfig {
    pub network: NetworkConfig,
    pub reward: RewardSpec,
    /// Number of eviction candidates exposed to the agent.
    pub candidates: usize,
    /// When true a rejected miss is served by the origin and adds no
    /// station load; when false the station relays it.
    pub origin_offload: bool,
}

impl Default for CacheEnvConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            reward: RewardSpec::default(),
            candidates: 4,
            origin_offload: true,
        }
    }
}

impl CacheEnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.reward.validate()?;
        if self.candidates == 0 {
            return Err(Error::invalid("need at least one eviction candidate"));
        }
        Ok(())
    }

    /// Recency reported for items never cached.
    pub fn recency_sentinel(&self) -> u64 {
        self.network.load_window as u64 * 10
    }

    /// Candidate slots actually exposed (bounded by the cache size).
    pub fn candidate_count(&self) -> usize {
        self.candidates.min(self.network.cache_capacity)
    }

    /// Agent action space: reject, or admit into one of the candidates.
    pub fn action_count(&self) -> usize {
        1 + self.candidate_count()
    }

    /// Load added to a station by serving one request.
    pub fn load_increment(&self) -> f64 {
        1.0 / (self.network.load_window * self.network.service_capacity) as f64
    }
}
