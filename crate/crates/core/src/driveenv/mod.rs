//! Three-vehicle longitudinal car-following environment: a scripted leader,
//! a controlled ego vehicle and an IDM follower on a single lane.

mod dynamics;
mod eval;
mod scenario;

pub use dynamics::{drive_reward, idm_accel, observe, reset, step, PlatoonState, StepResult, VehicleState, OBS_DIM};
pub use eval::{
    braking_policy, evaluate, no_collision_rate, run_episode, write_results_csv, EpisodeResult,
};
pub use scenario::{
    generate_drive_scenarios, profile_counts, read_manifest, write_manifest, DriveScenario, LeaderProfile, ProfileMix,
    ScenarioRanges,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intelligent-driver-model parameters of the rear vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    pub desired_speed: f64,
    /// Desired time headway in seconds.
    pub headway: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub min_gap: f64,
    pub exponent: f64,
    /// Hard bound on braking.
    pub max_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            headway: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            min_gap: 2.0,
            exponent: 4.0,
            max_decel: 9.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveReward {
    pub collision: f64,
    pub alive: f64,
    pub headway_bonus: f64,
    /// Target headway in seconds; the target gap is `standstill_gap` plus
    /// this times ego speed.
    pub headway: f64,
    pub standstill_gap: f64,
    pub gap_scale: f64,
}

impl Default for DriveReward {
    fn default() -> Self {
        Self {
            collision: -100.0,
            alive: 1.0,
            headway_bonus: 0.5,
            headway: 2.0,
            standstill_gap: 5.0,
            gap_scale: 10.0,
        }
    }
}

/// Leader speed pattern for the stop-and-go profile: the target speed swings
/// between the initial speed and standstill with the given period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopAndGo {
    pub period: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    /// Speed-tracking time constant in seconds.
    pub tau: f64,
}

impl Default for StopAndGo {
    fn default() -> Self {
        Self {
            period: 12.0,
            max_accel: 2.0,
            max_decel: 3.0,
            tau: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub dt: f64,
    pub v_max: f64,
    pub vehicle_length: f64,
    /// Ego acceleration for each discrete action.
    pub actions: Vec<f64>,
    pub follower: IdmParams,
    pub reward: DriveReward,
    pub stop_and_go: StopAndGo,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 35.0,
            vehicle_length: 5.0,
            actions: vec![-4.0, -2.0, 0.0, 1.0, 2.0],
            follower: IdmParams::default(),
            reward: DriveReward::default(),
            stop_and_go: StopAndGo::default(),
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.v_max > 0.0 && self.vehicle_length > 0.0) {
            return Err(Error::invalid("dt, v_max and vehicle_length must be positive"));
        }
        if self.actions.is_empty() || self.actions.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("need at least one finite ego acceleration"));
        }
        let f = &self.follower;
        if !(f.desired_speed > 0.0 && f.max_accel > 0.0 && f.comfort_decel > 0.0 && f.max_decel > 0.0) {
            return Err(Error::invalid("IDM speeds and accelerations must be positive"));
        }
        let s = &self.stop_and_go;
        if !(s.period > 0.0 && s.tau > 0.0 && s.max_accel > 0.0 && s.max_decel > 0.0) {
            return Err(Error::invalid("stop-and-go parameters must be positive"));
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    /// Index of the strongest braking action.
    pub fn brake_action(&self) -> usize {
        (0..self.actions.len())
            .min_by(|&a, &b| self.actions[a].total_cmp(&self.actions[b]))
            .unwrap_or(0)
    }

    /// Index of the action closest to zero acceleration.
    pub fn coast_action(&self) -> usize {
        (0..self.actions.len())
            .min_by(|&a, &b| self.actions[a].abs().total_cmp(&self.actions[b].abs()))
            .unwrap_or(0)
    }
}
