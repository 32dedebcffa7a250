use rand::Rng;
use serde::{Deserialize, Serialize};

use super::epsilon::{epsilon_at, EpsilonSchedule};
use super::mlp::{LossSpec, Mlp};
use super::optim::{Optimizer, OptimizerKind};
use super::params::ParamVector;
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::scalar::{argmax, Real};

/// DQN hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnHyper {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync_every: u64,
    pub train_every: u64,
    /// Minimum buffer fill before the first update.
    pub learn_start: usize,
    pub optimizer: OptimizerKind,
    pub clip_norm: Option<f64>,
    pub epsilon: EpsilonSchedule,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.95,
            lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 50_000,
            target_sync_every: 500,
            train_every: 1,
            learn_start: 64,
            optimizer: OptimizerKind::Adam,
            clip_norm: Some(10.0),
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl DqnHyper {
    pub fn validate(&self) -> Result<()> {
        self.epsilon.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0,1]", self.gamma)));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::invalid("buffer must hold at least one batch"));
        }
        if self.lr <= 0.0 || self.target_sync_every == 0 || self.train_every == 0 {
            return Err(Error::invalid("lr, target_sync_every and train_every must be positive"));
        }
        Ok(())
    }

    pub fn layer_dims(&self, obs_dim: usize, n_actions: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(obs_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(n_actions);
        dims
    }
}

/// `r + gamma * max_next`, or just `r` on terminal transitions.
pub fn bellman_target<T: Real>(reward: T, gamma: T, max_next_q: T, done: bool) -> T {
    if done {
        reward
    } else {
        reward + gamma * max_next_q
    }
}

/// One gradient step on the squared TD error of a sampled minibatch.
/// Returns the minibatch loss measured before the step. `target` is only read.
pub fn dqn_train_step<T: Real, R: Rng + ?Sized>(
    online: &mut Mlp<T>,
    target: &Mlp<T>,
    buffer: &ReplayBuffer<T>,
    gamma: T,
    batch_size: usize,
    opt: &mut Optimizer<T>,
    rng: &mut R,
) -> Result<T> {
    let batch = buffer.sample(batch_size, rng)?;
    let next_q = target.forward_batch(&batch.next_states)?;
    let n_actions = target.output_dim();
    let targets: Vec<T> = next_q
        .output()
        .chunks_exact(n_actions)
        .zip(batch.rewards.iter().zip(&batch.dones))
        .map(|(q, (&r, &done))| {
            let best = q[argmax(q)];
            bellman_target(r, gamma, best, done)
        })
        .collect();
    let (loss, grad) = online.loss_and_grad(
        &batch.states,
        &LossSpec::SelectedAction {
            actions: batch.actions,
            targets,
        },
    )?;
    opt.step(online.params_mut(), &grad);
    Ok(loss)
}

/// Hard copy of the online parameters into the target network.
pub fn sync_target<T: Real>(online: &Mlp<T>, target: &mut Mlp<T>) -> Result<()> {
    if online.params().manifest() != target.params().manifest() {
        return Err(Error::invalid("online/target manifest mismatch"));
    }
    target.set_params(online.params())
}

/// Epsilon-greedy DQN agent with replay and a hard-synced target network.
#[derive(Clone, Debug)]
pub struct DqnAgent<T> {
    hyper: DqnHyper,
    online: Mlp<T>,
    target: Mlp<T>,
    opt: Optimizer<T>,
    buffer: ReplayBuffer<T>,
    env_steps: u64,
    updates: u64,
}

impl<T: Real> DqnAgent<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, n_actions: usize, hyper: DqnHyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let online = Mlp::new(&hyper.layer_dims(obs_dim, n_actions), rng)?;
        Self::with_network(online, hyper)
    }

    pub fn with_network(online: Mlp<T>, hyper: DqnHyper) -> Result<Self> {
        hyper.validate()?;
        let target = online.clone();
        let opt = Optimizer::new(hyper.optimizer, T::lit(hyper.lr), hyper.clip_norm.map(T::lit));
        let buffer = ReplayBuffer::new(hyper.buffer_capacity, online.input_dim())?;
        Ok(Self {
            hyper,
            online,
            target,
            opt,
            buffer,
            env_steps: 0,
            updates: 0,
        })
    }

    pub fn hyper(&self) -> &DqnHyper {
        &self.hyper
    }

    /// Overrides the optimiser step size, e.g. for a per-round schedule.
    pub fn set_lr(&mut self, lr: f64) {
        self.opt.set_lr(T::lit(lr));
    }

    pub fn online(&self) -> &Mlp<T> {
        &self.online
    }

    pub fn target(&self) -> &Mlp<T> {
        &self.target
    }

    pub fn params(&self) -> &ParamVector<T> {
        self.online.params()
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer<T> {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(&self.hyper.epsilon, self.env_steps)
    }

    /// Replaces both networks with `params` (a broadcast global model).
    pub fn load_params(&mut self, params: &ParamVector<T>) -> Result<()> {
        self.online.set_params(params)?;
        self.target.set_params(params)
    }

    pub fn q_values(&self, obs: &[T]) -> Result<Vec<T>> {
        self.online.forward(obs)
    }

    pub fn greedy(&self, obs: &[T]) -> Result<usize> {
        Ok(argmax(&self.online.forward(obs)?))
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[T], rng: &mut R) -> Result<usize> {
        if rng.random::<f64>() < self.epsilon() {
            Ok(rng.random_range(0..self.online.output_dim()))
        } else {
            self.greedy(obs)
        }
    }

    /// Stores a transition and trains when the schedule says so. Returns the
    /// TD loss if an update happened.
    pub fn observe<R: Rng + ?Sized>(&mut self, t: Transition<T>, rng: &mut R) -> Result<Option<T>> {
        self.buffer.push(t)?;
        self.env_steps += 1;
        let ready = self.buffer.len() >= self.hyper.batch_size.max(self.hyper.learn_start);
        if !ready || !self.env_steps.is_multiple_of(self.hyper.train_every) {
            return Ok(None);
        }
        let loss = dqn_train_step(
            &mut self.online,
            &self.target,
            &self.buffer,
            T::lit(self.hyper.gamma),
            self.hyper.batch_size,
            &mut self.opt,
            rng,
        )?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.hyper.target_sync_every) {
            sync_target(&self.online, &mut self.target)?;
        }
        Ok(Some(loss))
    }
}
