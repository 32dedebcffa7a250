use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linearly decaying exploration rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_end: 0.05,
            decay_steps: 20_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn new(eps_start: f64, eps_end: f64, decay_steps: u64) -> Result<Self> {
        let s = Self {
            eps_start,
            eps_end,
            decay_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return Err(Error::invalid(format!(
                "epsilon schedule needs 0 <= end <= start <= 1, got {} -> {}",
                self.eps_start, self.eps_end
            )));
        }
        Ok(())
    }
}

pub fn epsilon_at(schedule: &EpsilonSchedule, step: u64) -> f64 {
    if schedule.decay_steps == 0 || step >= schedule.decay_steps {
        return schedule.eps_end;
    }
    let frac = step as f64 / schedule.decay_steps as f64;
    schedule.eps_start + (schedule.eps_end - schedule.eps_start) * frac
}
