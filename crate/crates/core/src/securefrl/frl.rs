//! Federated DQN training of car-following agents with poisoned updates and
//! robust server-side aggregation.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attack::{attacked_params, AttackSpec};
use super::robust::{robust_aggregate, AggregateOutcome, RobustRule};
use crate::driveenv::{
    evaluate, generate_drive_scenarios, no_collision_rate, observe, reset, step, DriveConfig, DriveScenario,
    PlatoonState, ProfileMix, ScenarioRanges, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::fedtwin::ModelUpdate;
use crate::harness::SeedTree;
use crate::learncore::{DqnAgent, DqnHyper, EpsilonSchedule, Mlp, OptimizerKind, ParamVector, Transition};
use crate::scalar::argmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrlConfig {
    pub agents: usize,
    pub adversary_fraction: f64,
    pub attack: AttackSpec,
    pub rule: RobustRule,
    pub rounds: usize,
    pub local_episodes: usize,
    /// Local learning rate in round `r` is `dqn.lr * lr_decay^r`.
    pub lr_decay: f64,
    pub dqn: DqnHyper,
    pub drive: DriveConfig,
    pub scenarios: ScenarioRanges,
    /// Share of hard-brake scenarios in the first and last agent's local
    /// mix; agents in between are interpolated, the rest of the mix split
    /// evenly between the other two profiles.
    pub hard_brake_share: (f64, f64),
    pub eval_scenarios: usize,
    pub probe_size: usize,
    pub probe_mix: ProfileMix,
}

pub fn frl_dqn_defaults() -> DqnHyper {
    DqnHyper {
        hidden: vec![32, 32],
        gamma: 0.98,
        lr: 1e-3,
        batch_size: 32,
        buffer_capacity: 20_000,
        target_sync_every: 200,
        train_every: 4,
        learn_start: 500,
        optimizer: OptimizerKind::Adam,
        clip_norm: Some(10.0),
        epsilon: EpsilonSchedule {
            eps_start: 1.0,
            eps_end: 0.05,
            decay_steps: 20_000,
        },
    }
}

impl Default for FrlConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            adversary_fraction: 0.2,
            attack: AttackSpec::SignFlip,
            rule: RobustRule::FilteredTwinValidated { k: 3.0 },
            rounds: 30,
            local_episodes: 50,
            lr_decay: 0.9,
            dqn: frl_dqn_defaults(),
            drive: DriveConfig::default(),
            scenarios: ScenarioRanges::default(),
            hard_brake_share: (0.1, 0.5),
            eval_scenarios: 500,
            probe_size: 100,
            probe_mix: ProfileMix {
                cruise: 0.2,
                stop_and_go: 0.2,
                hard_brake: 0.6,
            },
        }
    }
}

impl FrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.rounds == 0 || self.eval_scenarios == 0 || self.probe_size == 0 {
            return Err(Error::invalid("agents, rounds, eval_scenarios and probe_size must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.adversary_fraction) {
            return Err(Error::invalid("adversary fraction must lie in [0, 0.5)"));
        }
        let bad = self.adversary_fraction * self.agents as f64;
        if (bad - bad.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "adversary fraction {} of {} agents is not a whole number",
                self.adversary_fraction, self.agents
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1]"));
        }
        let (lo, hi) = self.hard_brake_share;
        if !((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi)) {
            return Err(Error::invalid("hard_brake_share bounds must lie in [0, 1]"));
        }
        self.attack.validate()?;
        self.rule.validate()?;
        self.dqn.validate()?;
        self.drive.validate()?;
        self.scenarios.validate()?;
        self.probe_mix.validate()
    }

    pub fn adversaries(&self) -> usize {
        (self.adversary_fraction * self.agents as f64).round() as usize
    }

    /// Local profile mix of agent `i`.
    pub fn agent_mix(&self, i: usize) -> ProfileMix {
        let (lo, hi) = self.hard_brake_share;
        let t = if self.agents > 1 { i as f64 / (self.agents - 1) as f64 } else { 0.0 };
        let hard = lo + (hi - lo) * t;
        ProfileMix {
            cruise: (1.0 - hard) / 2.0,
            stop_and_go: (1.0 - hard) / 2.0,
            hard_brake: hard,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Honest,
    Adversarial(AttackSpec),
}

/// One federated driving agent with its own replay memory and scenario
/// stream.
#[derive(Clone, Debug)]
pub struct AgentSlot {
    pub id: usize,
    pub role: SlotRole,
    pub agent: DqnAgent<f32>,
    pub ranges: ScenarioRanges,
    pub rng: ChaCha8Rng,
    episodes_done: usize,
}

impl AgentSlot {
    pub fn new(id: usize, role: SlotRole, agent: DqnAgent<f32>, ranges: ScenarioRanges, rng: ChaCha8Rng) -> Self {
        Self {
            id,
            role,
            agent,
            ranges,
            rng,
            episodes_done: 0,
        }
    }
}

fn greedy_action(net: &Mlp<f32>, state: &PlatoonState, cfg: &DriveConfig) -> Result<usize> {
    Ok(argmax(&net.forward(&observe(state, cfg))?))
}

/// Loads `global`, trains for `episodes` fresh scenarios from the slot's
/// stream and returns the resulting parameters.
pub fn local_train(
    slot: &mut AgentSlot,
    global: &ParamVector<f32>,
    episodes: usize,
    drive: &DriveConfig,
    round: u64,
) -> Result<ModelUpdate<f32>> {
    let params = local_train_params(slot, global, episodes, drive)?;
    ModelUpdate::new(params, slot.id, round, episodes.max(1) as u64)
}

/// Local training returning raw parameters, which may have diverged.
fn local_train_params(
    slot: &mut AgentSlot,
    global: &ParamVector<f32>,
    episodes: usize,
    drive: &DriveConfig,
) -> Result<ParamVector<f32>> {
    slot.agent.load_params(global)?;
    if episodes > 0 {
        let first_id = slot.episodes_done;
        let scenarios = generate_drive_scenarios(episodes, &slot.ranges, first_id, &mut slot.rng)?;
        for sc in &scenarios {
            let mut state = reset(sc, drive)?;
            let mut obs = observe(&state, drive);
            loop {
                let action = slot.agent.act(&obs, &mut slot.rng)?;
                let r = step(&state, action, drive)?;
                let next_obs = observe(&r.state, drive);
                // hitting the horizon is a time limit, not a terminal state
                slot.agent.observe(
                    Transition {
                        state: obs.to_vec(),
                        action,
                        reward: r.reward as f32,
                        next_state: next_obs.to_vec(),
                        done: r.collided,
                    },
                    &mut slot.rng,
                )?;
                if r.done {
                    break;
                }
                state = r.state;
                obs = next_obs;
            }
        }
        slot.episodes_done += episodes;
    }
    Ok(slot.agent.params().clone())
}

/// Fixed probe scenarios for validating aggregates, weighted towards hard
/// braking by `mix`.
pub fn twin_probe_set(ranges: &ScenarioRanges, mix: ProfileMix, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DriveScenario>> {
    if size == 0 {
        return Err(Error::invalid("probe set size must be >= 1"));
    }
    generate_drive_scenarios(size, &ranges.with_mix(mix), 0, rng)
}

/// Collisions of the greedy policy of `params` over `scenarios`.
pub fn count_collisions(params: &ParamVector<f32>, scenarios: &[DriveScenario], cfg: &DriveConfig) -> Result<usize> {
    let net = Mlp::from_params(params.clone())?;
    let results = evaluate(scenarios, cfg, &|s: &PlatoonState| greedy_action(&net, s, cfg))?;
    Ok(results.iter().filter(|r| r.collided).count())
}

/// Greedy no-collision rate of `params` over `scenarios`.
pub fn policy_no_collision_rate(params: &ParamVector<f32>, scenarios: &[DriveScenario], cfg: &DriveConfig) -> Result<f64> {
    let net = Mlp::from_params(params.clone())?;
    no_collision_rate(&evaluate(scenarios, cfg, &|s: &PlatoonState| greedy_action(&net, s, cfg))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrlRound {
    pub round: usize,
    pub no_collision_rate: f64,
    pub kept: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct FrlReport {
    pub rounds: Vec<FrlRound>,
    pub final_params: ParamVector<f32>,
}

impl FrlReport {
    pub fn final_rate(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.no_collision_rate)
    }
}

/// Builds the agent slots; the first `adversaries()` ids are adversarial.
pub fn build_slots(cfg: &FrlConfig, seeds: &SeedTree, init: &Mlp<f32>) -> Result<Vec<AgentSlot>> {
    let bad = cfg.adversaries();
    (0..cfg.agents)
        .map(|i| {
            let role = if i < bad {
                SlotRole::Adversarial(cfg.attack)
            } else {
                SlotRole::Honest
            };
            let agent = DqnAgent::with_network(init.clone(), cfg.dqn.clone())?;
            let ranges = cfg.scenarios.with_mix(cfg.agent_mix(i));
            Ok(AgentSlot::new(i, role, agent, ranges, seeds.child("frl/agent", i).rng("stream")))
        })
        .collect()
}

/// Runs the federated schedule and evaluates the global greedy policy on
/// held-out scenarios after every round.
pub fn run_frl(cfg: &FrlConfig, seed: u64) -> Result<FrlReport> {
    cfg.validate()?;
    let seeds = SeedTree::new(seed);
    let dims = cfg.dqn.layer_dims(OBS_DIM, cfg.drive.action_count());
    let init = Mlp::<f32>::new(&dims, &mut seeds.rng("frl/init"))?;
    let mut slots = build_slots(cfg, &seeds, &init)?;
    let eval_set = generate_drive_scenarios(cfg.eval_scenarios, &cfg.scenarios, 1_000_000, &mut seeds.rng("frl/eval"))?;
    let probe = twin_probe_set(&cfg.scenarios, cfg.probe_mix, cfg.probe_size, &mut seeds.rng("frl/probe"))?;

    let mut global = init.params().clone();
    let mut incumbent_collisions: Option<usize> = None;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        // Non-finite updates cannot be averaged and are dropped whatever
        // the rule; a non-finite aggregate keeps the previous model.
        let updates: Vec<ModelUpdate<f32>> = slots
            .par_iter_mut()
            .map(|slot| {
                slot.agent.set_lr(cfg.dqn.lr * cfg.lr_decay.powi(round as i32));
                let mut params = local_train_params(slot, &global, cfg.local_episodes, &cfg.drive)?;
                if let SlotRole::Adversarial(spec) = slot.role {
                    let mut rng = seeds.child("frl/attack", slot.id).rng(&format!("round/{round}"));
                    params = attacked_params(&params, &spec, &mut rng)?;
                }
                if !params.is_finite() {
                    return Ok(None);
                }
                ModelUpdate::new(params, slot.id, round as u64, cfg.local_episodes.max(1) as u64).map(Some)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let outcome = if updates.is_empty() {
            AggregateOutcome {
                params: global.clone(),
                kept: Vec::new(),
                fallback: true,
            }
        } else {
            let mut accepted_collisions = None;
            let out = robust_aggregate(&updates, &cfg.rule, &global, |candidate| {
                if !candidate.is_finite() {
                    return Ok(false);
                }
                let incumbent = match incumbent_collisions {
                    Some(c) => c,
                    None => count_collisions(&global, &probe, &cfg.drive)?,
                };
                let c = count_collisions(candidate, &probe, &cfg.drive)?;
                incumbent_collisions = Some(incumbent);
                let ok = c <= incumbent;
                if ok {
                    accepted_collisions = Some(c);
                }
                Ok(ok)
            })?;
            if let Some(c) = accepted_collisions {
                incumbent_collisions = Some(c);
            }
            if out.params.is_finite() {
                out
            } else {
                AggregateOutcome {
                    params: global.clone(),
                    kept: Vec::new(),
                    fallback: true,
                }
            }
        };
        global = outcome.params;
        rounds.push(FrlRound {
            round,
            no_collision_rate: policy_no_collision_rate(&global, &eval_set, &cfg.drive)?,
            kept: outcome.kept.len(),
            fallback: outcome.fallback,
        });
    }
    Ok(FrlReport {
        rounds,
        final_params: global,
    })
}

/// One cell of the attack-by-rule matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub attack: String,
    pub rule: String,
    pub agents: usize,
    pub no_collision_rate: f64,
}

/// Heatmap CSV: `attack,rule,agents,no_collision_rate`.
pub fn write_heatmap_csv<W: Write>(cells: &[HeatmapCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["attack", "rule", "agents", "no_collision_rate"])?;
    for c in cells {
        w.write_record([
            c.attack.clone(),
            c.rule.clone(),
            c.agents.to_string(),
            format!("{:.6}", c.no_collision_rate),
        ])?;
    }
    w.flush().map_err(|e| Error::io("heatmap csv", e))?;
    Ok(())
}

/// Per-round CSV: `round,no_collision_rate,kept,fallback`.
pub fn write_frl_rounds_csv<W: Write>(rounds: &[FrlRound], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["round", "no_collision_rate", "kept", "fallback"])?;
    for r in rounds {
        w.write_record([
            r.round.to_string(),
            format!("{:.6}", r.no_collision_rate),
            r.kept.to_string(),
            r.fallback.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("frl rounds csv", e))?;
    Ok(())
}
