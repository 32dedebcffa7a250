use super::cluster::{cluster, ClusterMethod, ClusterPartition};
use super::graph::AffinityGraph;
use crate::error::{Error, Result};

fn relative_change(old: f64, new: f64) -> f64 {
    if old == new {
        0.0
    } else if old == 0.0 {
        f64::INFINITY
    } else {
        ((new - old) / old).abs()
    }
}

/// Largest relative change of the total edge weight or of any node's
/// incident weight.
pub fn graph_drift(old: &AffinityGraph, new: &AffinityGraph) -> Result<f64> {
    if old.node_count() != new.node_count() {
        return Err(Error::DimensionMismatch {
            expected: old.node_count(),
            actual: new.node_count(),
        });
    }
    let total = relative_change(old.total_weight(), new.total_weight());
    Ok((0..old.node_count())
        .map(|i| relative_change(old.degree(i), new.degree(i)))
        .fold(total, f64::max))
}

/// Reclusters `new_graph` when its drift from `old_graph` reaches
/// `drift_threshold`; otherwise hands back the old partition. The flag says
/// whether reclustering happened.
pub fn reform_clusters(
    old: &ClusterPartition,
    old_graph: &AffinityGraph,
    new_graph: &AffinityGraph,
    drift_threshold: f64,
    method: ClusterMethod,
) -> Result<(ClusterPartition, bool)> {
    if old.assignment.len() != new_graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: old.assignment.len(),
            actual: new_graph.node_count(),
        });
    }
    if graph_drift(old_graph, new_graph)? >= drift_threshold {
        Ok((cluster(new_graph, method)?, true))
    } else {
        Ok((old.clone(), false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedtwin::{build_affinity, AffinityWeights, BsAttributes};

    fn attrs() -> Vec<BsAttributes> {
        (0..6)
            .map(|i| BsAttributes {
                position: ((i / 3) as f64 * 5.0, (i % 3) as f64 * 0.3),
                backhaul_capacity: 10.0,
                coverage_radius: 0.5,
                traffic_histogram: vec![1.0, (i / 3) as f64],
            })
            .collect()
    }

    #[test]
    fn identical_graph_keeps_partition() {
        let g = build_affinity(&attrs(), &AffinityWeights::default()).unwrap();
        let method = ClusterMethod::Modularity;
        let p = cluster(&g, method).unwrap();
        let (q, re) = reform_clusters(&p, &g, &g, 0.1, method).unwrap();
        assert!(!re);
        assert_eq!(q, p);
        let (_, forced) = reform_clusters(&p, &g, &g, 0.0, method).unwrap();
        assert!(forced);
    }

    #[test]
    fn halved_backhaul_triggers_recluster() {
        let a = attrs();
        let g = build_affinity(&a, &AffinityWeights::default()).unwrap();
        let mut b = a.clone();
        // node 0 keeps the maximum elsewhere, so its pairs lose backhaul weight
        b[0].backhaul_capacity = 5.0;
        let g2 = build_affinity(&b, &AffinityWeights::default()).unwrap();
        let p = cluster(&g, ClusterMethod::FixedK { k: 2 }).unwrap();
        assert!(graph_drift(&g, &g2).unwrap() > 0.05);
        let (_, re) = reform_clusters(&p, &g, &g2, 0.05, ClusterMethod::FixedK { k: 2 }).unwrap();
        assert!(re);
        let small = build_affinity(&a[..4], &AffinityWeights::default()).unwrap();
        assert!(reform_clusters(&p, &g, &small, 0.05, ClusterMethod::Modularity).is_err());
    }
}
