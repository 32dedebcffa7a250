use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::scenario::{DriveScenario, LeaderProfile};
use super::{DriveConfig, IdmParams};
use crate::error::{Error, Result};

/// Length of the agent's observation vector.
pub const OBS_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: f64,
    pub velocity: f64,
    pub length: f64,
}

impl VehicleState {
    fn advance(&mut self, accel: f64, dt: f64, v_max: f64) {
        self.velocity = (self.velocity + accel * dt).clamp(0.0, v_max);
        self.position += self.velocity * dt;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatoonState {
    pub leader: VehicleState,
    pub ego: VehicleState,
    pub follower: VehicleState,
    pub tick: u32,
    pub elapsed: f64,
    pub scenario: DriveScenario,
}

impl PlatoonState {
    /// Bumper gap between the leader's tail and the ego's nose.
    pub fn front_gap(&self) -> f64 {
        self.leader.position - self.ego.position - self.leader.length
    }

    pub fn rear_gap(&self) -> f64 {
        self.ego.position - self.follower.position - self.ego.length
    }

    pub fn collided(&self) -> bool {
        self.front_gap() <= 0.0 || self.rear_gap() <= 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: PlatoonState,
    pub reward: f64,
    pub done: bool,
    pub collided: bool,
}

/// Places follower, ego and leader so the bumper gaps equal the scenario's
/// gaps, follower at the origin.
pub fn reset(scenario: &DriveScenario, cfg: &DriveConfig) -> Result<PlatoonState> {
    scenario.validate()?;
    cfg.validate()?;
    let len = cfg.vehicle_length;
    let clamp = |v: f64| v.clamp(0.0, cfg.v_max);
    let follower = VehicleState {
        position: 0.0,
        velocity: clamp(scenario.follower_speed),
        length: len,
    };
    let ego = VehicleState {
        position: scenario.rear_gap + len,
        velocity: clamp(scenario.ego_speed),
        length: len,
    };
    let leader = VehicleState {
        position: ego.position + scenario.front_gap + len,
        velocity: clamp(scenario.leader_speed),
        length: len,
    };
    Ok(PlatoonState {
        leader,
        ego,
        follower,
        tick: 0,
        elapsed: 0.0,
        scenario: scenario.clone(),
    })
}

fn leader_accel(state: &PlatoonState, cfg: &DriveConfig) -> f64 {
    let sc = &state.scenario;
    match sc.profile {
        LeaderProfile::Cruise => 0.0,
        LeaderProfile::HardBrake => {
            if state.tick >= sc.event_step {
                -sc.leader_decel
            } else {
                0.0
            }
        }
        LeaderProfile::StopAndGo => {
            let p = &cfg.stop_and_go;
            let t = (state.tick.saturating_sub(sc.event_step)) as f64 * cfg.dt;
            let target = if state.tick < sc.event_step {
                sc.leader_speed
            } else {
                sc.leader_speed * 0.5 * (1.0 + (TAU * t / p.period).cos())
            };
            ((target - state.leader.velocity) / p.tau).clamp(-p.max_decel, p.max_accel)
        }
    }
}

/// Intelligent driver model acceleration, bounded to
/// `[-max_decel, max_accel]`.
pub fn idm_accel(p: &IdmParams, v: f64, v_lead: f64, gap: f64) -> f64 {
    if gap <= 0.0 {
        return -p.max_decel;
    }
    let dv = v - v_lead;
    let s_star = p.min_gap + (v * p.headway + v * dv / (2.0 * (p.max_accel * p.comfort_decel).sqrt())).max(0.0);
    let a = p.max_accel * (1.0 - (v / p.desired_speed).powf(p.exponent) - (s_star / gap).powi(2));
    a.clamp(-p.max_decel, p.max_accel)
}

/// Per-step reward: the collision penalty, or the alive bonus plus a
/// headway-keeping term peaking when the front gap equals the standstill
/// gap plus the target headway times ego speed.
pub fn drive_reward(state: &PlatoonState, collided: bool, cfg: &DriveConfig) -> f64 {
    let r = &cfg.reward;
    if collided {
        return r.collision;
    }
    let target = r.standstill_gap + r.headway * state.ego.velocity;
    r.alive + r.headway_bonus * (-(state.front_gap() - target).abs() / r.gap_scale).exp()
}

/// Advances the platoon by one tick with semi-implicit Euler (speed first,
/// then position with the new speed).
pub fn step(state: &PlatoonState, action: usize, cfg: &DriveConfig) -> Result<StepResult> {
    let ego_a = *cfg
        .actions
        .get(action)
        .ok_or_else(|| Error::InvalidAction(format!("action {action} of {}", cfg.actions.len())))?;
    let lead_a = leader_accel(state, cfg);
    let follow_a = idm_accel(&cfg.follower, state.follower.velocity, state.ego.velocity, state.rear_gap());
    let mut next = state.clone();
    next.leader.advance(lead_a, cfg.dt, cfg.v_max);
    next.ego.advance(ego_a, cfg.dt, cfg.v_max);
    next.follower.advance(follow_a, cfg.dt, cfg.v_max);
    next.tick += 1;
    next.elapsed = next.tick as f64 * cfg.dt;
    let collided = next.collided();
    let done = collided || next.tick >= next.scenario.horizon;
    let reward = drive_reward(&next, collided, cfg);
    Ok(StepResult {
        state: next,
        reward,
        done,
        collided,
    })
}

/// `[ego speed, front gap, front closing speed, rear gap, rear closing
/// speed]`, scaled to order one.
pub fn observe(state: &PlatoonState, cfg: &DriveConfig) -> [f32; OBS_DIM] {
    let v = state.ego.velocity;
    [
        (v / cfg.v_max) as f32,
        (state.front_gap() / 50.0).min(4.0) as f32,
        ((v - state.leader.velocity) / 10.0) as f32,
        (state.rear_gap() / 50.0).min(4.0) as f32,
        ((state.follower.velocity - v) / 10.0) as f32,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scenario(profile: LeaderProfile, front: f64, rear: f64, speed: f64) -> DriveScenario {
        DriveScenario {
            id: 0,
            seed: 0,
            profile,
            leader_speed: speed,
            ego_speed: speed,
            follower_speed: speed,
            front_gap: front,
            rear_gap: rear,
            horizon: 150,
            event_step: 30,
            leader_decel: 6.0,
        }
    }

    fn cfg() -> DriveConfig {
        DriveConfig::default()
    }

    #[test]
    fn reset_places_bumper_gaps() {
        let s = reset(&scenario(LeaderProfile::Cruise, 30.0, 30.0, 25.0), &cfg()).unwrap();
        assert_eq!((s.follower.position, s.ego.position, s.leader.position), (0.0, 35.0, 70.0));
        assert_eq!(s.front_gap(), 30.0);
        assert_eq!(s.rear_gap(), 30.0);
        assert_eq!([s.leader.velocity, s.ego.velocity, s.follower.velocity], [25.0; 3]);
        assert_eq!(s, reset(&scenario(LeaderProfile::Cruise, 30.0, 30.0, 25.0), &cfg()).unwrap());
    }

    #[test]
    fn non_positive_gap_is_rejected() {
        assert!(reset(&scenario(LeaderProfile::Cruise, 0.0, 30.0, 25.0), &cfg()).is_err());
        assert!(reset(&scenario(LeaderProfile::Cruise, 30.0, -1.0, 25.0), &cfg()).is_err());
    }

    #[test]
    fn coasting_vehicle_moves_one_metre() {
        let mut v = VehicleState {
            position: 0.0,
            velocity: 10.0,
            length: 5.0,
        };
        v.advance(0.0, 0.1, 35.0);
        assert_eq!((v.position, v.velocity), (1.0, 10.0));
    }

    #[test]
    fn zero_gap_is_a_collision() {
        let mut s = reset(&scenario(LeaderProfile::Cruise, 30.0, 30.0, 25.0), &cfg()).unwrap();
        s.leader.position = 30.0;
        s.ego.position = 25.0;
        assert_eq!(s.front_gap(), 0.0);
        assert!(s.collided());
    }

    #[test]
    fn invalid_action_errors() {
        let s = reset(&scenario(LeaderProfile::Cruise, 30.0, 30.0, 25.0), &cfg()).unwrap();
        assert!(matches!(step(&s, 5, &cfg()), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn hard_brake_leader_decelerates_from_event() {
        let c = cfg();
        let mut s = reset(&scenario(LeaderProfile::HardBrake, 60.0, 60.0, 20.0), &c).unwrap();
        for _ in 0..30 {
            s = step(&s, c.coast_action(), &c).unwrap().state;
            assert_eq!(s.leader.velocity, 20.0);
        }
        s = step(&s, c.coast_action(), &c).unwrap().state;
        assert!((s.leader.velocity - 19.4).abs() < 1e-9);
    }

    #[test]
    fn stop_and_go_leader_halts_and_recovers() {
        let c = cfg();
        let mut sc = scenario(LeaderProfile::StopAndGo, 200.0, 60.0, 20.0);
        sc.event_step = 0;
        sc.horizon = 130;
        let mut s = reset(&sc, &c).unwrap();
        let mut speeds = Vec::new();
        for _ in 0..130 {
            s = step(&s, c.brake_action(), &c).unwrap().state;
            speeds.push(s.leader.velocity);
        }
        let min = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min < 3.0, "{min}");
        assert!(speeds.last().unwrap() > &10.0);
    }

    #[test]
    fn collision_reward_and_headway_peak() {
        let c = cfg();
        let mut s = reset(&scenario(LeaderProfile::Cruise, 45.0, 30.0, 20.0), &c).unwrap();
        assert_eq!(drive_reward(&s, true, &c), -100.0);
        assert_eq!(drive_reward(&s, false, &c), 1.5);
        s.ego.velocity = 10.0;
        let expected = 1.0 + 0.5 * (-2.0f64).exp();
        assert!((drive_reward(&s, false, &c) - expected).abs() < 1e-12);
    }

    #[test]
    fn clean_episode_earns_at_least_horizon() {
        let c = cfg();
        let mut s = reset(&scenario(LeaderProfile::Cruise, 40.0, 40.0, 20.0), &c).unwrap();
        let mut total = 0.0;
        loop {
            let r = step(&s, c.coast_action(), &c).unwrap();
            total += r.reward;
            s = r.state;
            if r.done {
                assert!(!r.collided);
                break;
            }
        }
        assert!(total >= 150.0);
    }

    #[test]
    fn idm_follows_its_definition() {
        let p = IdmParams::default();
        // free road at desired speed: no acceleration
        assert!(idm_accel(&p, 30.0, 30.0, 1e9).abs() < 1e-9);
        // standstill with a huge gap accelerates at the maximum
        assert!((idm_accel(&p, 0.0, 0.0, 1e9) - 1.5).abs() < 1e-9);
        let s_star: f64 = 2.0 + 20.0 * 2.0 + 20.0 * 5.0 / (2.0 * 3.0f64.sqrt());
        let expected = 1.5 * (1.0 - (20.0f64 / 30.0).powi(4) - (s_star / 40.0).powi(2));
        assert!((idm_accel(&p, 20.0, 15.0, 40.0) - expected.max(-9.0)).abs() < 1e-12);
        assert_eq!(idm_accel(&p, 20.0, 0.0, 1.0), -9.0);
    }

    proptest! {
        #[test]
        fn semi_implicit_update_and_gap_continuity(
            speed in 0.0f64..35.0, front in 1.0f64..80.0, rear in 1.0f64..80.0,
            actions in proptest::collection::vec(0usize..5, 1..60), profile in 0usize..3,
        ) {
            let c = cfg();
            let prof = [LeaderProfile::Cruise, LeaderProfile::StopAndGo, LeaderProfile::HardBrake][profile];
            let mut s = reset(&scenario(prof, front, rear, speed), &c).unwrap();
            for a in actions {
                let r = step(&s, a, &c).unwrap();
                let n = &r.state;
                for (old, new) in [(s.leader, n.leader), (s.ego, n.ego), (s.follower, n.follower)] {
                    prop_assert!(((new.position - old.position) - new.velocity * c.dt).abs() <= 1e-9);
                    prop_assert!((0.0..=c.v_max).contains(&new.velocity));
                }
                prop_assert!((n.front_gap() - s.front_gap()).abs() <= c.v_max * c.dt + 1e-9);
                prop_assert!((n.rear_gap() - s.rear_gap()).abs() <= c.v_max * c.dt + 1e-9);
                s = r.state;
                if r.done { break; }
            }
        }

        #[test]
        fn equal_speeds_never_collide_while_coasting(speed in 0.0f64..35.0, gap in 0.5f64..100.0) {
            let c = cfg();
            let mut sc = scenario(LeaderProfile::Cruise, gap, 1e6, speed);
            sc.horizon = 300;
            let mut s = reset(&sc, &c).unwrap();
            // a far-away follower keeps the rear gap open
            s.follower.velocity = 0.0;
            loop {
                let r = step(&s, c.coast_action(), &c).unwrap();
                prop_assert!(!r.collided);
                prop_assert!((r.state.front_gap() - gap).abs() < 1e-6);
                if r.done { break; }
                s = r.state;
            }
        }
    }
}
