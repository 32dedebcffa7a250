//! Safe-RL edge caching experiment: DQN admission control with optional
//! twin forecasts and intervention modules.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::seeds::SeedTree;
use crate::cacheenv::{metrics, observe, CacheAction, CacheEnvConfig, CacheMetrics, CacheState, EnvObservation, EpisodeLog};
use crate::error::{Error, Result};
use crate::learncore::{DqnAgent, DqnHyper, EpsilonSchedule, Transition};
use crate::netmodel::{generate_trace, RequestTrace};
use crate::safety::{intervene_action, intervene_state, shaped_reward, InterventionConfig, InterventionLog};
use crate::twin::{forecast_next, risk_verdict, sync, train_forecaster, DigitalTwin, Forecaster, ForecasterConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachingVariant {
    /// Plain DQN on the raw observation.
    Baseline,
    /// DQN with twin forecast features, no interventions.
    RlDnt,
    /// Intervention modules without forecast features.
    Interventions,
    /// Forecast features plus all intervention modules.
    Full,
}

impl CachingVariant {
    pub const ALL: [CachingVariant; 4] = [Self::Baseline, Self::RlDnt, Self::Interventions, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::RlDnt => "rl_dnt",
            Self::Interventions => "interventions",
            Self::Full => "full",
        }
    }

    pub fn uses_forecast(self) -> bool {
        matches!(self, Self::RlDnt | Self::Full)
    }

    /// Intervention settings for this variant given the configured modules.
    pub fn interventions(self, base: &InterventionConfig) -> InterventionConfig {
        match self {
            Self::Baseline | Self::RlDnt => InterventionConfig {
                state_enabled: false,
                action_enabled: false,
                reward_enabled: false,
                ..base.clone()
            },
            Self::Interventions | Self::Full => base.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CachingConfig {
    pub env: CacheEnvConfig,
    pub interventions: InterventionConfig,
    pub dqn: DqnHyper,
    pub forecaster: ForecasterConfig,
    /// Ticks of history the forecaster is trained on.
    pub history_ticks: u64,
    pub train_ticks: u64,
    pub eval_ticks: u64,
    pub sync_deadline: u64,
}

impl Default for CachingConfig {
    fn default() -> Self {
        Self {
            env: CacheEnvConfig::default(),
            interventions: InterventionConfig::default(),
            dqn: DqnHyper {
                hidden: vec![32, 32],
                batch_size: 32,
                buffer_capacity: 20_000,
                target_sync_every: 250,
                train_every: 2,
                epsilon: EpsilonSchedule {
                    eps_start: 1.0,
                    eps_end: 0.02,
                    decay_steps: 20_000,
                },
                ..DqnHyper::default()
            },
            forecaster: ForecasterConfig::default(),
            history_ticks: 2_000,
            train_ticks: 5_000,
            eval_ticks: 5_000,
            sync_deadline: 5,
        }
    }
}

impl CachingConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.interventions.validate()?;
        self.dqn.validate()?;
        self.forecaster.validate()?;
        if self.train_ticks == 0 || self.eval_ticks == 0 {
            return Err(Error::invalid("train_ticks and eval_ticks must be >= 1"));
        }
        Ok(())
    }

    fn forecast_dim(&self) -> usize {
        3 + self.env.candidate_count()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CachingOutcome {
    pub variant: CachingVariant,
    pub seed: u64,
    pub train: CacheMetrics,
    pub eval: CacheMetrics,
    pub forecaster_losses: Vec<f64>,
    #[serde(skip)]
    pub eval_log: EpisodeLog,
}

fn prob_feature(p: f32, catalog: usize) -> f32 {
    let n = catalog as f32;
    (1.0 + n * p.max(0.0)).ln() / (1.0 + n).ln()
}

/// Forecast features: top-1 id, top-1 probability, probability of the
/// requested item and of each candidate's occupant.
fn forecast_features(forecaster: &Forecaster, window: &[usize], obs: &EnvObservation, dim: usize) -> Result<Vec<f32>> {
    if window.len() < forecaster.window {
        return Ok(vec![0.0; dim]);
    }
    let probs = forecast_next(forecaster, &window[window.len() - forecaster.window..])?;
    let n = probs.len();
    let top = crate::scalar::argmax(&probs);
    let mut f = Vec::with_capacity(dim);
    f.push(top as f32 / (n.max(2) - 1) as f32);
    f.push(prob_feature(probs[top], n));
    f.push(prob_feature(probs[obs.content_id as usize], n));
    for c in &obs.candidates {
        f.push(c.content.map_or(0.0, |id| prob_feature(probs[id as usize], n)));
    }
    f.resize(dim, 0.0);
    Ok(f)
}

fn action_index(action: CacheAction, obs: &EnvObservation) -> usize {
    if !action.accept {
        return 0;
    }
    obs.candidates
        .iter()
        .position(|c| Some(c.slot) == action.slot)
        .map_or(0, |k| k + 1)
}

struct Pending {
    features: Vec<f32>,
    action: usize,
    reward: f32,
}

struct Episode<'a> {
    cfg: &'a CachingConfig,
    interventions: InterventionConfig,
    forecaster: Option<Arc<Forecaster>>,
}

impl Episode<'_> {
    fn obs_dim(&self) -> usize {
        let env = &self.cfg.env;
        EnvObservation::base_dim(env.network.num_bs, env.candidate_count())
            + if self.forecaster.is_some() { self.cfg.forecast_dim() } else { 0 }
            + self.interventions.state_dim(env.network.num_bs)
    }

    /// Runs the agent over `trace` starting from `state`. When `training`
    /// the agent explores and learns; otherwise it acts greedily and is
    /// frozen.
    fn run(
        &self,
        agent: &mut DqnAgent<f32>,
        state: &mut CacheState,
        trace: &RequestTrace,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(EpisodeLog, InterventionLog)> {
        let env = &self.cfg.env;
        let num_bs = env.network.num_bs;
        let mut twin = DigitalTwin::for_env(env, self.cfg.sync_deadline);
        if let Some(f) = &self.forecaster {
            twin.install_forecaster(Arc::clone(f));
        }
        let mirror = self.interventions.state_enabled || self.interventions.action_enabled;
        let window_cap = self.forecaster.as_ref().map_or(0, |f| f.window);
        let mut windows: Vec<Vec<usize>> = vec![Vec::with_capacity(2 * window_cap); num_bs];
        let mut pending: Vec<Option<Pending>> = (0..num_bs).map(|_| None).collect();
        let mut log = EpisodeLog::new();
        let mut ilog = InterventionLog::default();

        for req in &trace.requests {
            let bs = req.bs_id as usize;
            state.advance_to(req.time);
            if mirror {
                sync(&mut twin, &state.snapshot(), req.time)?;
            }
            let mut obs = observe(state, env, req)?;
            if let Some(f) = twin.forecaster() {
                obs.extra = forecast_features(f, &windows[bs], &obs, self.cfg.forecast_dim())?;
            }
            let obs = intervene_state(obs, &twin, &self.interventions);
            let features = obs.features();

            if training {
                if let Some(p) = pending[bs].take() {
                    agent.observe(
                        Transition {
                            state: p.features,
                            action: p.action,
                            reward: p.reward,
                            next_state: features.clone(),
                            done: false,
                        },
                        rng,
                    )?;
                }
            }
            let chosen = if training { agent.act(&features, rng)? } else { agent.greedy(&features)? };
            let proposed = obs.action_for(chosen);
            let hit = state.is_cached(bs, req.content_id);
            // A hit is served whatever the agent proposes, so there is
            // nothing to override.
            let (executed, reason) = if hit {
                (proposed, None)
            } else {
                let verdict = risk_verdict(&twin, bs, proposed)?;
                intervene_action(proposed, &verdict, &obs, state, &self.interventions)
            };
            let outcome = state.step(env, executed, req)?;
            let loads = state.loads();
            let reward = shaped_reward(&self.interventions, outcome.reward, &loads);
            ilog.record(reason);
            log.record(req.time, bs, outcome.hit, reward, reason.is_some(), &loads);
            if training {
                pending[bs] = Some(Pending {
                    features,
                    action: if hit { chosen } else { action_index(executed, &obs) },
                    reward: reward as f32,
                });
            }
            if window_cap > 0 {
                let w = &mut windows[bs];
                if w.len() == 2 * window_cap {
                    w.drain(..window_cap);
                }
                w.push(req.content_id as usize);
            }
        }
        Ok((log, ilog))
    }
}

/// Trains and evaluates one variant for one seed. Traces, forecaster and
/// agent initialisation depend only on `seed`, so variants are paired.
pub fn run_caching(cfg: &CachingConfig, variant: CachingVariant, seed: u64) -> Result<CachingOutcome> {
    run_caching_with(cfg, variant, seed, None)
}

/// Like [`run_caching`], but evaluates on `eval_trace` when given instead of
/// a generated one. Its ticks are shifted to start no earlier than the end
/// of training.
pub fn run_caching_with(
    cfg: &CachingConfig,
    variant: CachingVariant,
    seed: u64,
    eval_trace: Option<&RequestTrace>,
) -> Result<CachingOutcome> {
    cfg.validate()?;
    let seeds = SeedTree::new(seed);
    let net = &cfg.env.network;
    let mut eval_trace = match eval_trace {
        Some(t) => {
            t.validate(net)?;
            if t.is_empty() {
                return Err(Error::Empty("replay trace"));
            }
            t.clone()
        }
        None => generate_trace(net, cfg.eval_ticks, &mut seeds.rng("caching/eval_trace"))?,
    };
    let shift = eval_trace.requests.first().map_or(0, |r| cfg.train_ticks.saturating_sub(r.time));
    for r in &mut eval_trace.requests {
        r.time += shift;
    }
    let train_trace = generate_trace(net, cfg.train_ticks, &mut seeds.rng("caching/train_trace"))?;

    let (forecaster, forecaster_losses) = if variant.uses_forecast() {
        let history = generate_trace(net, cfg.history_ticks, &mut seeds.rng("caching/history"))?;
        let report = train_forecaster(&history, net.catalog_size, &cfg.forecaster, &mut seeds.rng("caching/forecaster"))?;
        (Some(Arc::new(report.forecaster)), report.epoch_losses)
    } else {
        (None, Vec::new())
    };

    let episode = Episode {
        cfg,
        interventions: variant.interventions(&cfg.interventions),
        forecaster,
    };
    let mut agent_rng = seeds.rng("caching/agent");
    let mut agent = DqnAgent::<f32>::new(episode.obs_dim(), cfg.env.action_count(), cfg.dqn.clone(), &mut agent_rng)?;
    // Evaluation continues on a fresh trace from the caches left by training.
    let mut state = CacheState::new(&cfg.env)?;
    let (train_log, _) = episode.run(&mut agent, &mut state, &train_trace, true, &mut agent_rng)?;
    let (eval_log, _) = episode.run(&mut agent, &mut state, &eval_trace, false, &mut agent_rng)?;
    Ok(CachingOutcome {
        variant,
        seed,
        train: metrics(&train_log)?,
        eval: metrics(&eval_log)?,
        forecaster_losses,
        eval_log,
    })
}

/// Mean of a metric over outcomes.
pub fn mean_of(outcomes: &[CachingOutcome], f: impl Fn(&CacheMetrics) -> f64) -> f64 {
    if outcomes.is_empty() {
        return f64::NAN;
    }
    outcomes.iter().map(|o| f(&o.eval)).sum::<f64>() / outcomes.len() as f64
}

