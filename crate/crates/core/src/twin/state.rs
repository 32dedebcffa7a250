use std::sync::Arc;

use serde::Serialize;

use super::forecast::Forecaster;
use crate::cacheenv::{CacheAction, CacheEnvConfig, PhysicalSnapshot};
use crate::error::{Error, Result};

/// Mirrored view of the physical network.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinState {
    pub loads: Vec<f64>,
    pub occupancy: Vec<usize>,
    pub request_freq: Vec<Vec<u32>>,
    pub last_sync_tick: Option<u64>,
    pub stale: bool,
}

impl TwinState {
    pub fn new(num_bs: usize) -> Self {
        Self {
            loads: vec![0.0; num_bs],
            occupancy: vec![0; num_bs],
            request_freq: vec![Vec::new(); num_bs],
            last_sync_tick: None,
            stale: true,
        }
    }
}

/// The twin owner: mirror, risk model and (optionally) a forecaster.
#[derive(Clone, Debug)]
pub struct DigitalTwin {
    state: TwinState,
    pub sync_deadline: u64,
    pub overload_threshold: f64,
    pub load_increment: f64,
    forecaster: Option<Arc<Forecaster>>,
}

impl DigitalTwin {
    pub fn new(num_bs: usize, sync_deadline: u64, overload_threshold: f64, load_increment: f64) -> Self {
        Self {
            state: TwinState::new(num_bs),
            sync_deadline,
            overload_threshold,
            load_increment,
            forecaster: None,
        }
    }

    /// Twin matched to a caching environment's threshold and load step.
    pub fn for_env(cfg: &CacheEnvConfig, sync_deadline: u64) -> Self {
        Self::new(
            cfg.network.num_bs,
            sync_deadline,
            cfg.reward.overload_threshold,
            cfg.load_increment(),
        )
    }

    pub fn state(&self) -> &TwinState {
        &self.state
    }

    pub fn loads(&self) -> &[f64] {
        &self.state.loads
    }

    /// Recomputes the staleness flag against the wall clock `now`.
    pub fn set_clock(&mut self, now: u64) {
        self.state.stale = match self.state.last_sync_tick {
            Some(t) => now.saturating_sub(t) > self.sync_deadline,
            None => true,
        };
    }

    pub fn is_stale(&self) -> bool {
        self.state.stale
    }

    /// Swaps in a new forecaster as one unit.
    pub fn install_forecaster(&mut self, forecaster: Arc<Forecaster>) {
        self.forecaster = Some(forecaster);
    }

    pub fn forecaster(&self) -> Option<&Arc<Forecaster>> {
        self.forecaster.as_ref()
    }
}

/// Copies the physical snapshot into the mirror at time `tick`.
pub fn sync<'a>(twin: &'a mut DigitalTwin, snapshot: &PhysicalSnapshot, tick: u64) -> Result<&'a TwinState> {
    if let Some(last) = twin.state.last_sync_tick {
        if tick < last {
            return Err(Error::Ordering(format!("sync at tick {tick} after tick {last}")));
        }
    }
    if snapshot.tick > tick {
        return Err(Error::Ordering(format!("snapshot from tick {} synced at {tick}", snapshot.tick)));
    }
    let s = &mut twin.state;
    s.loads.clone_from(&snapshot.loads);
    s.occupancy.clone_from(&snapshot.occupancy);
    s.request_freq.clone_from(&snapshot.request_freq);
    s.last_sync_tick = Some(tick);
    twin.set_clock(tick);
    Ok(&twin.state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskReason {
    Overload,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Verdict {
    /// `None` when safe.
    pub unsafe_reason: Option<RiskReason>,
    pub predicted_load: f64,
    /// Set when the mirror is stale.
    pub degraded: bool,
}

impl Verdict {
    pub fn is_safe(&self) -> bool {
        self.unsafe_reason.is_none()
    }
}

/// Projects the station load one request ahead: admitting adds one serving
/// increment, rejecting adds nothing.
pub fn risk_verdict(twin: &DigitalTwin, bs_id: usize, action: CacheAction) -> Result<Verdict> {
    let load = *twin.state.loads.get(bs_id).ok_or(Error::UnknownNode(bs_id))?;
    let predicted_load = if action.accept { load + twin.load_increment } else { load };
    let unsafe_reason = (action.accept && predicted_load > twin.overload_threshold).then_some(RiskReason::Overload);
    Ok(Verdict {
        unsafe_reason,
        predicted_load,
        degraded: twin.state.stale,
    })
}
