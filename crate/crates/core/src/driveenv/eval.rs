use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dynamics::{reset, step, PlatoonState};
use super::scenario::{DriveScenario, LeaderProfile};
use super::DriveConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: usize,
    pub profile: LeaderProfile,
    pub collided: bool,
    pub steps: u32,
    pub reward: f64,
}

/// Plays one scenario to completion under `policy`.
pub fn run_episode<P>(scenario: &DriveScenario, cfg: &DriveConfig, mut policy: P) -> Result<EpisodeResult>
where
    P: FnMut(&PlatoonState) -> Result<usize>,
{
    let mut state = reset(scenario, cfg)?;
    let mut reward = 0.0;
    loop {
        let r = step(&state, policy(&state)?, cfg)?;
        reward += r.reward;
        if r.done {
            return Ok(EpisodeResult {
                scenario_id: scenario.id,
                profile: scenario.profile,
                collided: r.collided,
                steps: r.state.tick,
                reward,
            });
        }
        state = r.state;
    }
}

/// Runs every scenario independently; results keep the scenario order.
pub fn evaluate<P>(scenarios: &[DriveScenario], cfg: &DriveConfig, policy: &P) -> Result<Vec<EpisodeResult>>
where
    P: Fn(&PlatoonState) -> Result<usize> + Sync,
{
    scenarios.par_iter().map(|s| run_episode(s, cfg, policy)).collect()
}

/// Fraction of episodes that finished without a collision.
pub fn no_collision_rate(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("episode results"));
    }
    Ok(results.iter().filter(|r| !r.collided).count() as f64 / results.len() as f64)
}

/// Scripted controller: full braking whenever the front gap is below the
/// distance needed to stop behind a leader braking at `leader_decel`, with
/// one tick of reaction and a margin; otherwise gentle speed keeping.
pub fn braking_policy(state: &PlatoonState, cfg: &DriveConfig, leader_decel: f64, margin: f64) -> usize {
    let brake = -cfg.actions[cfg.brake_action()];
    let v = state.ego.velocity;
    let vl = state.leader.velocity;
    let safe = v * v / (2.0 * brake) - vl * vl / (2.0 * leader_decel) + v * cfg.dt + margin;
    if state.front_gap() < safe {
        cfg.brake_action()
    } else {
        cfg.coast_action()
    }
}

/// Per-episode CSV: `scenario_id,profile,collided,steps,reward`.
pub fn write_results_csv<W: Write>(results: &[EpisodeResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario_id", "profile", "collided", "steps", "reward"])?;
    for r in results {
        w.write_record([
            r.scenario_id.to_string(),
            r.profile.name().to_string(),
            r.collided.to_string(),
            r.steps.to_string(),
            format!("{:.6}", r.reward),
        ])?;
    }
    w.flush().map_err(|e| Error::io("episode results csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driveenv::{generate_drive_scenarios, ScenarioRanges};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn result(collided: bool) -> EpisodeResult {
        EpisodeResult {
            scenario_id: 0,
            profile: LeaderProfile::Cruise,
            collided,
            steps: 1,
            reward: 0.0,
        }
    }

    #[test]
    fn rate_counts_clean_episodes() {
        let mut rs: Vec<_> = (0..98).map(|_| result(false)).collect();
        rs.extend((0..2).map(|_| result(true)));
        assert_eq!(no_collision_rate(&rs).unwrap(), 0.98);
        assert_eq!(no_collision_rate(&rs[..98]).unwrap(), 1.0);
        assert_eq!(no_collision_rate(&rs[98..]).unwrap(), 0.0);
        assert!(no_collision_rate(&[]).is_err());
    }

    #[test]
    fn scripted_braking_never_collides() {
        let cfg = DriveConfig::default();
        let ranges = ScenarioRanges::default();
        let scenarios = generate_drive_scenarios(2000, &ranges, 0, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        let policy = |s: &PlatoonState| Ok(braking_policy(s, &cfg, ranges.leader_decel.1, 2.0));
        let results = evaluate(&scenarios, &cfg, &policy).unwrap();
        assert_eq!(no_collision_rate(&results).unwrap(), 1.0);
    }

    #[test]
    fn coasting_collides_in_hard_brakes() {
        let cfg = DriveConfig::default();
        let ranges = ScenarioRanges::default().with_mix(crate::driveenv::ProfileMix::only(LeaderProfile::HardBrake));
        let scenarios = generate_drive_scenarios(100, &ranges, 0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let coast = cfg.coast_action();
        let results = evaluate(&scenarios, &cfg, &|_: &PlatoonState| Ok(coast)).unwrap();
        assert_eq!(no_collision_rate(&results).unwrap(), 0.0);
    }

    #[test]
    fn episodes_are_deterministic() {
        let cfg = DriveConfig::default();
        let scenarios = generate_drive_scenarios(20, &ScenarioRanges::default(), 0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let actions = [0usize, 2, 4, 1, 3];
        let policy = |s: &PlatoonState| Ok(actions[s.tick as usize % 5]);
        assert_eq!(evaluate(&scenarios, &cfg, &policy).unwrap(), evaluate(&scenarios, &cfg, &policy).unwrap());
    }

    #[test]
    fn csv_has_expected_header() {
        let mut buf = Vec::new();
        write_results_csv(&[result(true)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scenario_id,profile,collided,steps,reward\n0,cruise,true,1,0.000000\n"
        );
    }
}
