//! Byzantine-robust federated reinforcement learning over the driving
//! environment: poisoning attacks, robust aggregation rules and a twin
//! validation step for aggregates.

mod attack;
mod frl;
mod robust;

pub use attack::{apply_attack, attacked_params, AttackSpec};
pub use frl::{
    build_slots, count_collisions, frl_dqn_defaults, local_train, policy_no_collision_rate, run_frl, twin_probe_set,
    write_frl_rounds_csv, write_heatmap_csv, AgentSlot, FrlConfig, FrlReport, FrlRound, HeatmapCell, SlotRole,
};
pub use robust::{distance_filter_keep, median, robust_aggregate, AggregateOutcome, RobustRule, MAD_SCALE};
