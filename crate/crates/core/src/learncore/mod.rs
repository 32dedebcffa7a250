//! Minimal neural-network and value-based RL machinery: dense networks, a
//! gated recurrent sequence model, manual backpropagation, replay, target
//! networks and epsilon-greedy DQN.

pub mod dqn;
pub mod epsilon;
pub mod gru;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod replay;
pub mod seq;

pub use dqn::{bellman_target, dqn_train_step, sync_target, DqnAgent, DqnHyper};
pub use epsilon::{epsilon_at, EpsilonSchedule};
pub use gru::GruShape;
pub use mlp::{backward, forward_mlp, LossSpec, Mlp};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Manifest, ParamVector};
pub use replay::{ReplayBuffer, SampledBatch, Transition};
pub use seq::{softmax, SeqDims, SequenceModel};
