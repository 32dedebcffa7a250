//! Intervention modules around the caching agent: state enrichment from the
//! twin, action override with a backup policy, and load-imbalance reward
//! shaping.

use serde::{Deserialize, Serialize};

use crate::cacheenv::{CacheAction, CacheState, EnvObservation};
use crate::error::{Error, Result};
use crate::twin::{DigitalTwin, RiskReason, Verdict};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupPolicy {
    /// Reject, unless the station cache is still empty (cold start).
    #[default]
    Reject,
    /// Admit into the least recently cached candidate slot.
    AdmitLru,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionConfig {
    pub state_enabled: bool,
    pub action_enabled: bool,
    pub reward_enabled: bool,
    pub imbalance_lambda: f64,
    pub backup_policy: BackupPolicy,
    /// Load above which a station counts as risky in the state features.
    pub risky_threshold: f64,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            state_enabled: true,
            action_enabled: true,
            reward_enabled: true,
            imbalance_lambda: 2.0,
            backup_policy: BackupPolicy::Reject,
            risky_threshold: 0.8,
        }
    }
}

impl InterventionConfig {
    pub fn disabled() -> Self {
        Self {
            state_enabled: false,
            action_enabled: false,
            reward_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.imbalance_lambda >= 0.0 && self.imbalance_lambda.is_finite()) {
            return Err(Error::invalid("imbalance_lambda must be finite and >= 0"));
        }
        if !(self.risky_threshold > 0.0 && self.risky_threshold <= 1.0) {
            return Err(Error::invalid("risky_threshold must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Number of features [`intervene_state`] appends for `num_bs` stations.
    pub fn state_dim(&self, num_bs: usize) -> usize {
        if self.state_enabled {
            2 * num_bs
        } else {
            0
        }
    }
}

/// Appends every mirrored station load followed by one risky-load indicator
/// per station. Identity when state intervention is off.
pub fn intervene_state(mut obs: EnvObservation, twin: &DigitalTwin, cfg: &InterventionConfig) -> EnvObservation {
    if cfg.state_enabled {
        let loads = twin.loads();
        obs.extra.extend(loads.iter().map(|&l| l as f32));
        obs.extra
            .extend(loads.iter().map(|&l| if l > cfg.risky_threshold { 1.0f32 } else { 0.0 }));
    }
    obs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionReason {
    Overload,
    InvalidAction,
}

fn is_valid(action: CacheAction, state: &CacheState, bs: usize) -> bool {
    if !action.accept {
        return true;
    }
    match action.slot {
        Some(s) => s < state.slots(bs).len(),
        None => !state.is_full(bs),
    }
}

fn backup(policy: BackupPolicy, obs: &EnvObservation, state: &CacheState) -> CacheAction {
    let lru = || {
        obs.candidates
            .iter()
            .max_by(|a, b| a.recency.total_cmp(&b.recency).then(b.slot.cmp(&a.slot)))
            .map(|c| CacheAction::admit(c.slot))
    };
    let out = match policy {
        BackupPolicy::Reject if state.is_empty_cache(obs.bs_index) => lru(),
        BackupPolicy::Reject => None,
        BackupPolicy::AdmitLru => lru(),
    };
    out.unwrap_or(CacheAction::REJECT)
}

/// Overrides `proposed` with the backup policy when the twin judges it
/// unsafe or it is not executable in `state`. Returns the executed action
/// and why it was replaced, if it was.
pub fn intervene_action(
    proposed: CacheAction,
    verdict: &Verdict,
    obs: &EnvObservation,
    state: &CacheState,
    cfg: &InterventionConfig,
) -> (CacheAction, Option<InterventionReason>) {
    if !cfg.action_enabled {
        return (proposed, None);
    }
    let reason = if !is_valid(proposed, state, obs.bs_index) {
        Some(InterventionReason::InvalidAction)
    } else {
        verdict.unsafe_reason.map(|r| match r {
            RiskReason::Overload => InterventionReason::Overload,
        })
    };
    match reason {
        Some(r) => (backup(cfg.backup_policy, obs, state), Some(r)),
        None => (proposed, None),
    }
}

/// `base - lambda * (max(loads) - min(loads))`.
pub fn intervene_reward(base: f64, loads: &[f64], lambda: f64) -> f64 {
    if loads.is_empty() || lambda == 0.0 {
        return base;
    }
    let max = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = loads.iter().copied().fold(f64::INFINITY, f64::min);
    base - lambda * (max - min)
}

/// Reward channel with its enable flag applied.
pub fn shaped_reward(cfg: &InterventionConfig, base: f64, loads: &[f64]) -> f64 {
    if cfg.reward_enabled {
        intervene_reward(base, loads, cfg.imbalance_lambda)
    } else {
        base
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InterventionRecord {
    pub intervened: bool,
    pub reason: Option<InterventionReason>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InterventionLog {
    pub records: Vec<InterventionRecord>,
    pub interventions: usize,
}

impl InterventionLog {
    pub fn record(&mut self, reason: Option<InterventionReason>) {
        self.interventions += usize::from(reason.is_some());
        self.records.push(InterventionRecord {
            intervened: reason.is_some(),
            reason,
        });
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// Interventions per step; 0 for an empty log.
    pub fn intervention_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.interventions as f64 / self.records.len() as f64
        }
    }
}
