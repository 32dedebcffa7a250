use super::state::{CacheAction, CacheState};
use super::CacheEnvConfig;
use crate::error::Result;
use crate::netmodel::Request;

/// A slot the agent may admit into.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateSlot {
    pub slot: usize,
    pub content: Option<u32>,
    /// Ticks since the occupant was cached (sentinel when empty).
    pub recency: f64,
    pub frequency: u32,
}

/// Raw observation plus any augmented features appended by the twin or the
/// state intervention module.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvObservation {
    pub bs_index: usize,
    pub num_bs: usize,
    pub client_id: usize,
    pub num_clients: usize,
    pub tick: u64,
    pub content_id: u32,
    pub requested_cached: bool,
    /// Ticks since the requested item was last cached (sentinel if never).
    pub requested_recency: f64,
    pub requested_frequency: u32,
    pub bs_requests: u64,
    pub catalog_size: usize,
    pub sentinel: f64,
    pub candidates: Vec<CandidateSlot>,
    /// Extra features appended after the base block, in a fixed order.
    pub extra: Vec<f32>,
}

/// Deterministic feature extraction for `request` against `state`.
pub fn observe(state: &CacheState, cfg: &CacheEnvConfig, request: &Request) -> Result<EnvObservation> {
    state.check_request(cfg, request)?;
    let bs = request.bs_id as usize;
    let now = request.time.max(state.tick);
    let sentinel = cfg.recency_sentinel() as f64;
    let recency = |cached: Option<u64>| match cached {
        Some(t) => (now.saturating_sub(t) as f64).min(sentinel),
        None => sentinel,
    };
    Ok(EnvObservation {
        bs_index: bs,
        num_bs: state.num_bs(),
        client_id: request.client_id as usize,
        num_clients: cfg.network.num_clients,
        tick: now,
        content_id: request.content_id,
        requested_cached: state.is_cached(bs, request.content_id),
        requested_recency: recency(state.last_cached_tick(bs, request.content_id)),
        requested_frequency: state.frequency(bs, request.content_id),
        bs_requests: state.total_requests[bs],
        catalog_size: cfg.network.catalog_size,
        sentinel,
        candidates: candidate_slots(state, bs, cfg.candidate_count(), &recency),
        extra: Vec::new(),
    })
}

/// Free slots first (lowest index), then occupied slots ordered by request
/// frequency, then age, then slot index.
fn candidate_slots(state: &CacheState, bs: usize, k: usize, recency: &dyn Fn(Option<u64>) -> f64) -> Vec<CandidateSlot> {
    let slots = &state.slots[bs];
    let mut out: Vec<CandidateSlot> = slots
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_none())
        .take(k)
        .map(|(slot, _)| CandidateSlot {
            slot,
            content: None,
            recency: recency(None),
            frequency: 0,
        })
        .collect();
    if out.len() < k {
        let mut occupied: Vec<(u32, u64, usize, u32)> = slots
            .iter()
            .enumerate()
            .filter_map(|(slot, c)| {
                c.map(|c| {
                    let cached = state.last_cached[bs][c as usize].unwrap_or(0);
                    (state.freq[bs][c as usize], cached, slot, c)
                })
            })
            .collect();
        let need = k - out.len();
        if occupied.len() > need {
            occupied.select_nth_unstable(need - 1);
            occupied.truncate(need);
        }
        occupied.sort_unstable();
        out.extend(occupied.into_iter().map(|(f, _, slot, c)| CandidateSlot {
            slot,
            content: Some(c),
            recency: recency(state.last_cached[bs][c as usize]),
            frequency: f,
        }));
    }
    out
}

/// Log-scaled share of a station's requests, roughly in `[0, 1]`.
fn share_feature(count: u32, total: u64, catalog: usize) -> f32 {
    let share = count as f64 / total.max(1) as f64;
    ((1.0 + share * catalog as f64).ln() / (1.0 + catalog as f64).ln()) as f32
}

impl EnvObservation {
    /// Number of base features produced by [`Self::features`] before `extra`.
    pub fn base_dim(num_bs: usize, candidates: usize) -> usize {
        num_bs + 4 + 4 * candidates
    }

    /// Normalized network input: station one-hot, client, requested-item
    /// features, per-candidate features, then `extra`.
    pub fn features(&self) -> Vec<f32> {
        let k = self.candidates.len();
        let mut f = Vec::with_capacity(Self::base_dim(self.num_bs, k) + self.extra.len());
        for b in 0..self.num_bs {
            f.push(if b == self.bs_index { 1.0 } else { 0.0 });
        }
        f.push(self.client_id as f32 / self.num_clients.saturating_sub(1).max(1) as f32);
        f.push(if self.requested_cached { 1.0 } else { 0.0 });
        let req_share = share_feature(self.requested_frequency, self.bs_requests, self.catalog_size);
        f.push(req_share);
        f.push((self.requested_recency / self.sentinel) as f32);
        for c in &self.candidates {
            let share = share_feature(c.frequency, self.bs_requests, self.catalog_size);
            f.push(if c.content.is_some() { 1.0 } else { 0.0 });
            f.push(share);
            f.push((c.recency / self.sentinel) as f32);
            let (a, b) = (self.requested_frequency as f32, c.frequency as f32);
            f.push((a - b) / (a + b + 1.0));
        }
        f.extend_from_slice(&self.extra);
        f
    }

    /// Maps an agent action index (0 = reject, `k + 1` = admit into
    /// candidate `k`) onto an environment action.
    pub fn action_for(&self, index: usize) -> CacheAction {
        match index.checked_sub(1).and_then(|k| self.candidates.get(k)) {
            Some(c) => CacheAction::admit(c.slot),
            None => CacheAction::REJECT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::NetworkConfig;

    fn cfg() -> CacheEnvConfig {
        CacheEnvConfig {
            network: NetworkConfig {
                catalog_size: 50,
                num_bs: 2,
                num_clients: 4,
                cache_capacity: 6,
                ..NetworkConfig::default()
            },
            ..CacheEnvConfig::default()
        }
    }

    fn req(time: u64, content: u32) -> Request {
        Request {
            time,
            content_id: content,
            client_id: 0,
            bs_id: 0,
        }
    }

    #[test]
    fn recency_counts_ticks_since_cached() {
        let cfg = cfg();
        let mut s = CacheState::new(&cfg).unwrap();
        s.step(&cfg, CacheAction::admit(0), &req(90, 7)).unwrap();
        let obs = observe(&s, &cfg, &req(100, 7)).unwrap();
        assert_eq!(obs.requested_recency, 10.0);
        assert!(obs.requested_cached);
        let never = observe(&s, &cfg, &req(100, 8)).unwrap();
        assert_eq!(never.requested_recency, cfg.recency_sentinel() as f64);
        assert_eq!(cfg.recency_sentinel(), 500);
    }

    #[test]
    fn candidates_prefer_free_then_least_frequent() {
        let cfg = cfg();
        let mut s = CacheState::new(&cfg).unwrap();
        // item i requested i+1 times, cached into slot i
        for i in 0..6u32 {
            for t in 0..=i {
                let action = if t == 0 { CacheAction::admit(i as usize) } else { CacheAction::REJECT };
                s.step(&cfg, action, &req(i as u64, i)).unwrap();
            }
        }
        let obs = observe(&s, &cfg, &req(10, 30)).unwrap();
        let items: Vec<_> = obs.candidates.iter().map(|c| c.content).collect();
        assert_eq!(items, vec![Some(0), Some(1), Some(2), Some(3)]);

        let fresh = CacheState::new(&cfg).unwrap();
        let obs = observe(&fresh, &cfg, &req(0, 1)).unwrap();
        assert_eq!(obs.candidates.iter().map(|c| c.slot).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(obs.candidates.iter().all(|c| c.content.is_none()));
    }

    #[test]
    fn features_have_fixed_dim_and_are_finite() {
        let cfg = cfg();
        let s = CacheState::new(&cfg).unwrap();
        let obs = observe(&s, &cfg, &req(0, 3)).unwrap();
        let f = obs.features();
        assert_eq!(f.len(), EnvObservation::base_dim(2, 4));
        assert!(f.iter().all(|v| v.is_finite()));
        assert_eq!(obs, observe(&s, &cfg, &req(0, 3)).unwrap());
    }

    #[test]
    fn action_index_mapping() {
        let cfg = cfg();
        let s = CacheState::new(&cfg).unwrap();
        let obs = observe(&s, &cfg, &req(0, 3)).unwrap();
        assert_eq!(obs.action_for(0), CacheAction::REJECT);
        assert_eq!(obs.action_for(2), CacheAction::admit(1));
        assert_eq!(obs.action_for(9), CacheAction::REJECT);
    }
}
