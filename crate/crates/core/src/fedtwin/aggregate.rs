use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learncore::ParamVector;
use crate::scalar::Real;

/// Parameters sent by one client (or cluster twin) after local training.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelUpdate<T> {
    pub params: ParamVector<T>,
    pub client_id: usize,
    pub round_produced: u64,
    pub sample_count: u64,
}

impl<T: Real> ModelUpdate<T> {
    pub fn new(params: ParamVector<T>, client_id: usize, round_produced: u64, sample_count: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::invalid("sample_count must be >= 1"));
        }
        if !params.is_finite() {
            return Err(Error::invalid(format!("update from client {client_id} has non-finite parameters")));
        }
        Ok(Self {
            params,
            client_id,
            round_produced,
            sample_count,
        })
    }
}

fn check_shapes<T: Real>(updates: &[&ModelUpdate<T>]) -> Result<()> {
    let first = updates.first().ok_or(Error::Empty("update set"))?;
    for u in updates {
        if u.params.len() != first.params.len() {
            return Err(Error::DimensionMismatch {
                expected: first.params.len(),
                actual: u.params.len(),
            });
        }
    }
    Ok(())
}

/// Weighted average `x0 + sum_i a_i (x_i - x0)` with `a_i = w_i / sum w`,
/// where `x0` is the first update after sorting by client id. The anchor
/// makes a single update, or a set of identical updates, come back exactly,
/// and sorting makes the result independent of input order.
pub fn weighted_mean<T: Real>(updates: &[&ModelUpdate<T>], weights: &[f64]) -> Result<ParamVector<T>> {
    check_shapes(updates)?;
    if weights.len() != updates.len() {
        return Err(Error::DimensionMismatch {
            expected: updates.len(),
            actual: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("aggregation weights must be >= 0 with a positive sum"));
    }
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by(|&a, &b| {
        updates[a].client_id.cmp(&updates[b].client_id).then_with(|| {
            let (pa, pb) = (updates[a].params.as_slice(), updates[b].params.as_slice());
            pa.iter()
                .zip(pb)
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let anchor = updates[order[0]].params.as_slice();
    let mut out = anchor.to_vec();
    for &i in &order[1..] {
        let a = T::lit(weights[i] / total);
        for ((o, &x), &x0) in out.iter_mut().zip(updates[i].params.as_slice()).zip(anchor) {
            *o += a * (x - x0);
        }
    }
    Ok(updates[order[0]].params.with_values(out))
}

/// Sample-count weighted average.
pub fn fedavg<T: Real>(updates: &[&ModelUpdate<T>]) -> Result<ParamVector<T>> {
    let w: Vec<f64> = updates.iter().map(|u| u.sample_count as f64).collect();
    weighted_mean(updates, &w)
}

/// Uniformly samples `ceil(fraction * n)` updates and returns their
/// sample-count weighted average, plus the participating client ids.
pub fn aggregate_sync<T: Real, R: Rng + ?Sized>(
    updates: &[ModelUpdate<T>],
    participation_fraction: f64,
    rng: &mut R,
) -> Result<(ParamVector<T>, Vec<usize>)> {
    if updates.is_empty() {
        return Err(Error::Empty("update set"));
    }
    if !(participation_fraction > 0.0 && participation_fraction <= 1.0) {
        return Err(Error::invalid(format!("participation fraction {participation_fraction} outside (0, 1]")));
    }
    let n = updates.len();
    let take = ((participation_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut chosen: Vec<usize> = if take == n { (0..n).collect() } else { sample(rng, n, take).into_vec() };
    chosen.sort_unstable();
    let picked: Vec<&ModelUpdate<T>> = chosen.iter().map(|&i| &updates[i]).collect();
    let ids = picked.iter().map(|u| u.client_id).collect();
    Ok((fedavg(&picked)?, ids))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StalenessMode {
    /// `alpha0 / (1 + staleness)`.
    #[default]
    Hyperbolic,
    /// `alpha0` regardless of staleness.
    Constant,
}

impl StalenessMode {
    pub fn alpha(self, alpha0: f64, staleness: u64) -> f64 {
        match self {
            Self::Hyperbolic => alpha0 / (1.0 + staleness as f64),
            Self::Constant => alpha0,
        }
    }
}

/// Global model under asynchronous, staleness-weighted mixing.
#[derive(Clone, Debug, PartialEq)]
pub struct AsyncState<T> {
    pub global: ParamVector<T>,
    pub current_version: u64,
    pub alpha0: f64,
    pub mode: StalenessMode,
}

impl<T: Real> AsyncState<T> {
    pub fn new(global: ParamVector<T>, alpha0: f64, mode: StalenessMode) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 <= 1.0) {
            return Err(Error::invalid(format!("alpha0 {alpha0} outside (0, 1]")));
        }
        Ok(Self {
            global,
            current_version: 0,
            alpha0,
            mode,
        })
    }
}

/// Mixes one update into the global model and bumps the version. Returns
/// the mixing weight used.
pub fn apply_async<T: Real>(state: &mut AsyncState<T>, update: &ModelUpdate<T>) -> Result<f64> {
    if update.round_produced > state.current_version {
        return Err(Error::Ordering(format!(
            "update produced at version {} but global is at {}",
            update.round_produced, state.current_version
        )));
    }
    if update.params.len() != state.global.len() {
        return Err(Error::DimensionMismatch {
            expected: state.global.len(),
            actual: update.params.len(),
        });
    }
    let tau = state.current_version - update.round_produced;
    let alpha = state.mode.alpha(state.alpha0, tau);
    let a = T::lit(alpha);
    let keep = T::one() - a;
    for (g, &u) in state.global.as_mut_slice().iter_mut().zip(update.params.as_slice()) {
        *g = keep * *g + a * u;
    }
    state.current_version += 1;
    Ok(alpha)
}
