use serde::{Deserialize, Serialize};

use super::observe::{observe, EnvObservation};
use super::CacheEnvConfig;
use crate::error::{Error, Result};
use crate::netmodel::{BaseStation, Request, RequestTrace};

const NO_SLOT: u32 = u32::MAX;

/// Admission decision for one request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheAction {
    pub accept: bool,
    /// Target slot; required when admitting into a full cache.
    pub slot: Option<usize>,
}

impl CacheAction {
    pub const REJECT: CacheAction = CacheAction {
        accept: false,
        slot: None,
    };

    pub fn admit(slot: usize) -> Self {
        Self {
            accept: true,
            slot: Some(slot),
        }
    }
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub hit: bool,
    pub overload: bool,
    pub admitted: bool,
    pub evicted: Option<u32>,
    /// Load of the serving station after the step.
    pub load: f64,
}

/// What the physical network reports to its twin.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalSnapshot {
    pub tick: u64,
    pub loads: Vec<f64>,
    pub occupancy: Vec<usize>,
    pub request_freq: Vec<Vec<u32>>,
}

/// Full simulator state: slot arrays, counters and station windows.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheState {
    pub(super) slots: Vec<Vec<Option<u32>>>,
    slot_of: Vec<Vec<u32>>,
    pub(super) last_cached: Vec<Vec<Option<u64>>>,
    pub(super) freq: Vec<Vec<u32>>,
    pub(super) total_requests: Vec<u64>,
    stations: Vec<BaseStation>,
    pub(super) tick: u64,
}

/// Empty caches and zeroed counters, plus the observation for `trace[0]`.
pub fn reset(cfg: &CacheEnvConfig, trace: &RequestTrace) -> Result<(CacheState, EnvObservation)> {
    let first = *trace.requests.first().ok_or(Error::Empty("request trace"))?;
    let state = CacheState::new(cfg)?;
    let obs = observe(&state, cfg, &first)?;
    Ok((state, obs))
}

impl CacheState {
    pub fn new(cfg: &CacheEnvConfig) -> Result<Self> {
        cfg.validate()?;
        let net = &cfg.network;
        let stations = (0..net.num_bs)
            .map(|id| BaseStation::new(id, net.cache_capacity, net.service_capacity, net.load_window))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            slots: vec![vec![None; net.cache_capacity]; net.num_bs],
            slot_of: vec![vec![NO_SLOT; net.catalog_size]; net.num_bs],
            last_cached: vec![vec![None; net.catalog_size]; net.num_bs],
            freq: vec![vec![0; net.catalog_size]; net.num_bs],
            total_requests: vec![0; net.num_bs],
            stations,
            tick: 0,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn num_bs(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self, bs: usize) -> &[Option<u32>] {
        &self.slots[bs]
    }

    pub fn occupancy(&self, bs: usize) -> usize {
        self.slots[bs].iter().filter(|s| s.is_some()).count()
    }

    pub fn is_full(&self, bs: usize) -> bool {
        self.slots[bs].iter().all(Option::is_some)
    }

    pub fn is_empty_cache(&self, bs: usize) -> bool {
        self.slots[bs].iter().all(Option::is_none)
    }

    pub fn is_cached(&self, bs: usize, content: u32) -> bool {
        self.slot_of[bs][content as usize] != NO_SLOT
    }

    pub fn last_cached_tick(&self, bs: usize, content: u32) -> Option<u64> {
        self.last_cached[bs][content as usize]
    }

    pub fn frequency(&self, bs: usize, content: u32) -> u32 {
        self.freq[bs][content as usize]
    }

    pub fn loads(&self) -> Vec<f64> {
        self.stations.iter().map(BaseStation::load).collect()
    }

    pub fn load(&self, bs: usize) -> f64 {
        self.stations[bs].load()
    }

    pub fn station(&self, bs: usize) -> &BaseStation {
        &self.stations[bs]
    }

    pub fn snapshot(&self) -> PhysicalSnapshot {
        PhysicalSnapshot {
            tick: self.tick,
            loads: self.loads(),
            occupancy: (0..self.num_bs()).map(|b| self.occupancy(b)).collect(),
            request_freq: self.freq.clone(),
        }
    }

    /// Moves every station clock to `tick` so loads are comparable.
    pub fn advance_to(&mut self, tick: u64) {
        if tick > self.tick {
            self.tick = tick;
        }
        for s in &mut self.stations {
            s.advance_to(self.tick);
        }
    }

    pub(super) fn check_request(&self, cfg: &CacheEnvConfig, request: &Request) -> Result<()> {
        if request.bs_id as usize >= self.num_bs() {
            return Err(Error::UnknownNode(request.bs_id as usize));
        }
        if request.content_id as usize >= cfg.network.catalog_size {
            return Err(Error::invalid(format!("content {} outside catalog", request.content_id)));
        }
        if request.time < self.tick {
            return Err(Error::Ordering(format!("request at tick {} after tick {}", request.time, self.tick)));
        }
        Ok(())
    }

    /// Serves `request` under `action`. A cached item is a hit whatever the
    /// action says; the action only governs admission and eviction on a miss.
    pub fn step(&mut self, cfg: &CacheEnvConfig, action: CacheAction, request: &Request) -> Result<StepOutcome> {
        self.check_request(cfg, request)?;
        let bs = request.bs_id as usize;
        let content = request.content_id;
        let hit = self.is_cached(bs, content);

        // Resolve the target slot before touching any state.
        let target = if !hit && action.accept {
            match action.slot {
                Some(s) if s < self.slots[bs].len() => Some(s),
                Some(s) => return Err(Error::InvalidAction(format!("slot {s} >= capacity {}", self.slots[bs].len()))),
                None => match self.slots[bs].iter().position(Option::is_none) {
                    Some(free) => Some(free),
                    None => return Err(Error::InvalidAction("admit without slot on a full cache".into())),
                },
            }
        } else {
            None
        };

        self.advance_to(request.time);
        self.freq[bs][content as usize] += 1;
        self.total_requests[bs] += 1;

        let mut evicted = None;
        if let Some(slot) = target {
            if let Some(old) = self.slots[bs][slot] {
                self.slot_of[bs][old as usize] = NO_SLOT;
                evicted = Some(old);
            }
            self.slots[bs][slot] = Some(content);
            self.slot_of[bs][content as usize] = slot as u32;
            self.last_cached[bs][content as usize] = Some(self.tick);
        }

        let served_here = hit || target.is_some() || !cfg.origin_offload;
        if served_here {
            self.stations[bs].record_served(1);
        }
        let load = self.stations[bs].load();
        let overload = load > cfg.reward.overload_threshold;
        let r = &cfg.reward;
        let reward = if hit { r.r_hit } else { r.r_miss } - if overload { r.c_overload } else { 0.0 };
        Ok(StepOutcome {
            reward,
            hit,
            overload,
            admitted: target.is_some(),
            evicted,
            load,
        })
    }
}
