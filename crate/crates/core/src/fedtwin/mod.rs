//! Clustered federated twinning: affinity graphs over base stations,
//! fixed-K and modularity clustering, synchronous weighted aggregation with
//! partial participation, staleness-aware asynchronous mixing and cluster
//! reformation.

mod aggregate;
mod cluster;
mod graph;
mod reform;
mod run;

pub use aggregate::{aggregate_sync, apply_async, fedavg, weighted_mean, AsyncState, ModelUpdate, StalenessMode};
pub use cluster::{
    cluster, cluster_fixed_k, cluster_modularity, modularity, rand_index, ClusterMethod, ClusterPartition, LouvainReport,
};
pub use graph::{affinity_components, build_affinity, circle_overlap_area, AffinityGraph, AffinityWeights, BsAttributes};
pub use reform::{graph_drift, reform_clusters};
pub use run::{
    local_train, run_centralized, run_fedtwin, write_rounds_csv, CentralReport, FedTwinConfig, FedTwinData, FedTwinReport,
    RoundMode, RoundRecord,
};
