use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderProfile {
    Cruise,
    StopAndGo,
    HardBrake,
}

impl LeaderProfile {
    pub const ALL: [LeaderProfile; 3] = [Self::Cruise, Self::StopAndGo, Self::HardBrake];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cruise => "cruise",
            Self::StopAndGo => "stop_and_go",
            Self::HardBrake => "hard_brake",
        }
    }
}

/// One car-following episode specification. `event_step` is when the hard
/// brake (or the first stop-and-go slowdown) begins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveScenario {
    pub id: usize,
    pub seed: u64,
    pub profile: LeaderProfile,
    pub leader_speed: f64,
    pub ego_speed: f64,
    pub follower_speed: f64,
    pub front_gap: f64,
    pub rear_gap: f64,
    pub horizon: u32,
    pub event_step: u32,
    pub leader_decel: f64,
}

impl DriveScenario {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("scenario horizon must be >= 1"));
        }
        if !(self.front_gap > 0.0 && self.rear_gap > 0.0) {
            return Err(Error::invalid(format!(
                "scenario {} has non-positive initial gap ({}, {})",
                self.id, self.front_gap, self.rear_gap
            )));
        }
        let speeds = [self.leader_speed, self.ego_speed, self.follower_speed];
        if speeds.iter().any(|v| !v.is_finite() || *v < 0.0) || !(self.leader_decel >= 0.0) {
            return Err(Error::invalid(format!("scenario {} has invalid speeds", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileMix {
    pub cruise: f64,
    pub stop_and_go: f64,
    pub hard_brake: f64,
}

impl Default for ProfileMix {
    fn default() -> Self {
        Self {
            cruise: 0.4,
            stop_and_go: 0.3,
            hard_brake: 0.3,
        }
    }
}

impl ProfileMix {
    pub fn only(profile: LeaderProfile) -> Self {
        let mut mix = Self {
            cruise: 0.0,
            stop_and_go: 0.0,
            hard_brake: 0.0,
        };
        *mix.weight_mut(profile) = 1.0;
        mix
    }

    pub fn weight(&self, profile: LeaderProfile) -> f64 {
        match profile {
            LeaderProfile::Cruise => self.cruise,
            LeaderProfile::StopAndGo => self.stop_and_go,
            LeaderProfile::HardBrake => self.hard_brake,
        }
    }

    fn weight_mut(&mut self, profile: LeaderProfile) -> &mut f64 {
        match profile {
            LeaderProfile::Cruise => &mut self.cruise,
            LeaderProfile::StopAndGo => &mut self.stop_and_go,
            LeaderProfile::HardBrake => &mut self.hard_brake,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = LeaderProfile::ALL.map(|p| self.weight(p));
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("profile mix {w:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

/// Sampling ranges for generated scenarios (uniform within each range).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioRanges {
    pub horizon: u32,
    pub speed: (f64, f64),
    pub front_gap: (f64, f64),
    pub rear_gap: (f64, f64),
    pub event_step: (u32, u32),
    pub leader_decel: (f64, f64),
    pub mix: ProfileMix,
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            horizon: 150,
            speed: (18.0, 28.0),
            front_gap: (25.0, 50.0),
            rear_gap: (20.0, 40.0),
            event_step: (20, 60),
            leader_decel: (5.0, 7.0),
            mix: ProfileMix::default(),
        }
    }
}

impl ScenarioRanges {
    pub fn validate(&self) -> Result<()> {
        self.mix.validate()?;
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.horizon == 0 || !ok(self.speed) || !ok(self.front_gap) || !ok(self.rear_gap) || !ok(self.leader_decel) {
            return Err(Error::invalid("bad scenario ranges"));
        }
        if self.front_gap.0 <= 0.0 || self.rear_gap.0 <= 0.0 || self.speed.0 < 0.0 || self.leader_decel.0 < 0.0 {
            return Err(Error::invalid("gaps must be positive, speeds and decelerations non-negative"));
        }
        if self.event_step.0 > self.event_step.1 || self.event_step.1 >= self.horizon {
            return Err(Error::invalid("event step range must fall inside the horizon"));
        }
        Ok(())
    }

    pub fn with_mix(&self, mix: ProfileMix) -> Self {
        Self { mix, ..self.clone() }
    }
}

/// Largest-remainder apportionment of `n` scenarios over the profile mix,
/// so every count is within one of `mix * n`.
pub fn profile_counts(mix: &ProfileMix, n: usize) -> [usize; 3] {
    let exact = LeaderProfile::ALL.map(|p| mix.weight(p) * n as f64);
    let mut counts = exact.map(|x| x.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn uniform<R: Rng + ?Sized>((lo, hi): (f64, f64), rng: &mut R) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Seeded scenarios with profile counts fixed by [`profile_counts`] and a
/// shuffled order. Ids run from `first_id`.
pub fn generate_drive_scenarios<R: Rng + ?Sized>(
    n: usize,
    ranges: &ScenarioRanges,
    first_id: usize,
    rng: &mut R,
) -> Result<Vec<DriveScenario>> {
    if n == 0 {
        return Err(Error::invalid("need at least one scenario"));
    }
    ranges.validate()?;
    let counts = profile_counts(&ranges.mix, n);
    let mut profiles: Vec<LeaderProfile> = LeaderProfile::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&p, c)| std::iter::repeat_n(p, c))
        .collect();
    profiles.shuffle(rng);
    Ok(profiles
        .into_iter()
        .enumerate()
        .map(|(i, profile)| {
            let ego_speed = uniform(ranges.speed, rng);
            DriveScenario {
                id: first_id + i,
                seed: rng.random(),
                profile,
                leader_speed: uniform(ranges.speed, rng),
                ego_speed,
                follower_speed: ego_speed,
                front_gap: uniform(ranges.front_gap, rng),
                rear_gap: uniform(ranges.rear_gap, rng),
                horizon: ranges.horizon,
                event_step: rng.random_range(ranges.event_step.0..=ranges.event_step.1),
                leader_decel: uniform(ranges.leader_decel, rng),
            }
        })
        .collect())
}

pub fn write_manifest(scenarios: &[DriveScenario], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), scenarios)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<DriveScenario>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scenarios: Vec<DriveScenario> = serde_json::from_reader(BufReader::new(file))?;
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}
