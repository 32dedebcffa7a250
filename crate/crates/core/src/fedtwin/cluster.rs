use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::AffinityGraph;
use crate::error::{Error, Result};

/// Node-to-cluster assignment with its modularity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl ClusterPartition {
    /// Relabels clusters by first appearance and scores them on `graph`.
    pub fn new(graph: &AffinityGraph, assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != graph.node_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.node_count(),
                actual: assignment.len(),
            });
        }
        let assignment = canonical_labels(&assignment);
        let modularity = modularity(graph, &assignment)?;
        Ok(Self { assignment, modularity })
    }

    pub fn cluster_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == cluster).collect()
    }

    /// `{node: cluster}` map for export.
    pub fn to_map(&self) -> BTreeMap<String, usize> {
        self.assignment.iter().enumerate().map(|(i, &c)| (i.to_string(), c)).collect()
    }
}

fn canonical_labels(assignment: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    assignment
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Newman modularity `sum_c (e_c/m - (d_c/2m)^2)` with weighted degrees;
/// zero for an edgeless graph.
pub fn modularity(graph: &AffinityGraph, assignment: &[usize]) -> Result<f64> {
    let n = graph.node_count();
    if assignment.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: assignment.len(),
        });
    }
    let m = graph.total_weight();
    if m == 0.0 {
        return Ok(0.0);
    }
    let k = assignment.iter().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for (i, j, w) in graph.edges() {
        if assignment[i] == assignment[j] {
            internal[assignment[i]] += w;
        }
    }
    for i in 0..n {
        degree[assignment[i]] += graph.degree(i);
    }
    Ok((0..k).map(|c| internal[c] / m - (degree[c] / (2.0 * m)).powi(2)).sum())
}

fn components(n: usize, edges: &[(usize, usize, f64)], alive: &[bool]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (e, &(i, j, _)) in edges.iter().enumerate() {
        if alive[e] {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    canonical_labels(&roots)
}

/// Deletes the weakest remaining edge (ties by endpoint order) until the
/// graph splits into exactly `k` connected components. Returns the
/// partition and the removed edges in removal order.
pub fn cluster_fixed_k(graph: &AffinityGraph, k: usize) -> Result<(ClusterPartition, Vec<(usize, usize, f64)>)> {
    let n = graph.node_count();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k={k} outside 1..={n}")));
    }
    let mut edges = graph.edges();
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut alive = vec![true; edges.len()];
    let mut labels = components(n, &edges, &alive);
    let count = |l: &[usize]| l.iter().max().map_or(0, |m| m + 1);
    if count(&labels) > k {
        return Err(Error::invalid(format!(
            "graph already has {} components, more than k={k}",
            count(&labels)
        )));
    }
    let mut removed = Vec::new();
    let mut next = 0;
    while count(&labels) < k {
        alive[next] = false;
        removed.push(edges[next]);
        next += 1;
        labels = components(n, &edges, &alive);
    }
    Ok((ClusterPartition::new(graph, labels)?, removed))
}

/// Result of modularity clustering: the partition and the modularity after
/// every local-move sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct LouvainReport {
    pub partition: ClusterPartition,
    pub q_history: Vec<f64>,
}

/// Louvain-style modularity maximisation: greedy local moves to the best
/// neighbouring community, then community aggregation, until a level no
/// longer improves modularity by more than 1e-9.
pub fn cluster_modularity(graph: &AffinityGraph) -> Result<LouvainReport> {
    let n = graph.node_count();
    let singletons = (0..n).collect::<Vec<_>>();
    if graph.edge_count() == 0 {
        return Ok(LouvainReport {
            partition: ClusterPartition::new(graph, singletons)?,
            q_history: vec![0.0],
        });
    }
    // Dense symmetric matrix; diagonal holds twice the internal weight.
    let mut adj: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| graph.weight(i, j)).collect()).collect();
    let m2: f64 = adj.iter().flatten().sum();
    let mut membership = singletons;
    let mut q = modularity(graph, &membership)?;
    let mut q_history = vec![q];

    loop {
        let size = adj.len();
        let k: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
        let mut comm: Vec<usize> = (0..size).collect();
        let mut tot = k.clone();
        let mut any_move = false;
        loop {
            let mut moved = false;
            for i in 0..size {
                let ci = comm[i];
                tot[ci] -= k[i];
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                links.insert(ci, 0.0);
                for j in 0..size {
                    if j != i && adj[i][j] > 0.0 {
                        *links.entry(comm[j]).or_insert(0.0) += adj[i][j];
                    }
                }
                let gain = |c: usize, l: f64| l - tot[c] * k[i] / m2;
                let mut best = ci;
                let mut best_gain = gain(ci, links[&ci]);
                for (&c, &l) in &links {
                    let g = gain(c, l);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += k[i];
                if best != ci {
                    comm[i] = best;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            any_move = true;
            let level_labels = canonical_labels(&comm);
            let trial: Vec<usize> = membership.iter().map(|&c| level_labels[c]).collect();
            q_history.push(modularity(graph, &trial)?);
        }
        if !any_move {
            break;
        }
        let labels = canonical_labels(&comm);
        membership = membership.iter().map(|&c| labels[c]).collect();
        let new_q = modularity(graph, &membership)?;
        let size_new = labels.iter().max().map_or(0, |m| m + 1);
        let mut agg = vec![vec![0.0; size_new]; size_new];
        for i in 0..size {
            for j in 0..size {
                agg[labels[i]][labels[j]] += adj[i][j];
            }
        }
        adj = agg;
        let gained = new_q - q;
        q = new_q;
        if gained < 1e-9 || size_new == size {
            break;
        }
    }
    Ok(LouvainReport {
        partition: ClusterPartition::new(graph, membership)?,
        q_history,
    })
}

/// Fraction of node pairs on which two labelings agree (same/different).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut agree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            agree += usize::from((a[i] == a[j]) == (b[i] == b[j]));
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClusterMethod {
    FixedK { k: usize },
    Modularity,
}

pub fn cluster(graph: &AffinityGraph, method: ClusterMethod) -> Result<ClusterPartition> {
    match method {
        ClusterMethod::FixedK { k } => Ok(cluster_fixed_k(graph, k)?.0),
        ClusterMethod::Modularity => Ok(cluster_modularity(graph)?.partition),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_triangles() -> AffinityGraph {
        AffinityGraph::from_edges(6, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)]).unwrap()
    }

    /// Direct double-sum definition: (1/2m) sum_ij (A_ij - k_i k_j / 2m) [c_i = c_j].
    fn q_oracle(g: &AffinityGraph, labels: &[usize]) -> f64 {
        let n = g.node_count();
        let m2: f64 = (0..n).map(|i| g.degree(i)).sum();
        if m2 == 0.0 {
            return 0.0;
        }
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    q += g.weight(i, j) - g.degree(i) * g.degree(j) / m2;
                }
            }
        }
        q / m2
    }

    /// Every set partition of 0..n as restricted-growth strings.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == n {
                out.push(prefix.clone());
                return;
            }
            let next = prefix.iter().max().map_or(0, |m| m + 1);
            for c in 0..=next {
                prefix.push(c);
                rec(prefix, n, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), n, &mut out);
        out
    }

    fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> AffinityGraph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j, rng.random_range(0.1..2.0)));
                }
            }
        }
        AffinityGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn two_triangles_modularity_is_one_half() {
        let g = two_triangles();
        assert!((modularity(&g, &[0, 0, 0, 1, 1, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(modularity(&g, &[0; 6]).unwrap(), 0.0);
        let r = cluster_modularity(&g).unwrap();
        assert_eq!(r.partition.assignment, vec![0, 0, 0, 1, 1, 1]);
        assert!((r.partition.modularity - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singleton_modularity_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_graph(6, 0.6, &mut rng);
        let m = g.total_weight();
        let expected: f64 = -(0..6).map(|i| (g.degree(i) / (2.0 * m)).powi(2)).sum::<f64>();
        assert!((modularity(&g, &[0, 1, 2, 3, 4, 5]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn modularity_matches_exhaustive_oracle_on_small_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=6 {
            let parts = all_partitions(n);
            for _ in 0..5 {
                let g = random_graph(n, 0.5, &mut rng);
                for p in &parts {
                    let q = modularity(&g, p).unwrap();
                    assert!((q - q_oracle(&g, p)).abs() < 1e-12);
                    assert!((-0.5 - 1e-12..=1.0 + 1e-12).contains(&q), "{q}");
                }
            }
        }
    }

    #[test]
    fn complete_graph_stays_together() {
        let edges: Vec<_> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j, 1.0))).collect();
        let g = AffinityGraph::from_edges(4, &edges).unwrap();
        let best = all_partitions(4)
            .into_iter()
            .max_by(|a, b| q_oracle(&g, a).total_cmp(&q_oracle(&g, b)))
            .unwrap();
        assert_eq!(best, vec![0; 4]);
        assert_eq!(cluster_modularity(&g).unwrap().partition.assignment, vec![0; 4]);
    }

    #[test]
    fn louvain_finds_exhaustive_optimum_on_tiny_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut matched = 0;
        for _ in 0..30 {
            let g = random_graph(6, 0.5, &mut rng);
            if g.edge_count() == 0 {
                matched += 1;
                continue;
            }
            let best = all_partitions(6).iter().map(|p| q_oracle(&g, p)).fold(f64::MIN, f64::max);
            let r = cluster_modularity(&g).unwrap();
            assert!(r.partition.modularity <= best + 1e-12);
            matched += usize::from(r.partition.modularity >= best - 1e-9);
            assert!(r.q_history.windows(2).all(|w| w[1] > w[0]));
        }
        // greedy heuristic: optimal on most tiny graphs
        assert!(matched >= 20, "{matched}");
    }

    #[test]
    fn planted_blocks_are_recovered() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth: Vec<usize> = (0..30).map(|i| i / 10).collect();
            let mut edges = Vec::new();
            for i in 0..30 {
                for j in i + 1..30 {
                    let p = if truth[i] == truth[j] { 0.8 } else { 0.05 };
                    if rng.random::<f64>() < p {
                        edges.push((i, j, 1.0));
                    }
                }
            }
            let g = AffinityGraph::from_edges(30, &edges).unwrap();
            let ri = rand_index(&cluster_modularity(&g).unwrap().partition.assignment, &truth).unwrap();
            assert!(ri >= 0.9, "seed {seed}: {ri}");
            total += ri;
        }
        assert!(total / 20.0 >= 0.9);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let g = AffinityGraph::empty(3);
        let r = cluster_modularity(&g).unwrap();
        assert_eq!(r.partition.assignment, vec![0, 1, 2]);
        assert_eq!(r.partition.modularity, 0.0);
    }

    #[test]
    fn fixed_k_path_example() {
        // path 0-1 (w5), 1-2 (w1), 2-3 (w5): the weak middle edge goes first
        let g = AffinityGraph::from_edges(4, &[(0, 1, 5.0), (1, 2, 1.0), (2, 3, 5.0)]).unwrap();
        let (p, removed) = cluster_fixed_k(&g, 2).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 1, 1]);
        assert_eq!(removed, vec![(1, 2, 1.0)]);
        let (all, _) = cluster_fixed_k(&g, 4).unwrap();
        assert_eq!(all.assignment, vec![0, 1, 2, 3]);
        let (one, none) = cluster_fixed_k(&g, 1).unwrap();
        assert_eq!(one.assignment, vec![0; 4]);
        assert!(none.is_empty());
        assert!(cluster_fixed_k(&g, 5).is_err());
        assert!(cluster_fixed_k(&g, 0).is_err());
    }

    #[test]
    fn fixed_k_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.random_range(3..15);
            // ring backbone keeps the graph connected
            let mut edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, rng.random_range(0.1..2.0))).collect();
            for i in 0..n {
                for j in i + 2..n {
                    if rng.random::<f64>() < 0.3 && !(i == 0 && j == n - 1) {
                        edges.push((i, j, rng.random_range(0.1..2.0)));
                    }
                }
            }
            let g = AffinityGraph::from_edges(n, &edges).unwrap();
            let k = rng.random_range(1..=n);
            let (p, removed) = cluster_fixed_k(&g, k).unwrap();
            assert_eq!(p.cluster_count(), k);
            assert!(removed.windows(2).all(|w| w[0].2 <= w[1].2));
        }
    }

    proptest! {
        #[test]
        fn rand_index_bounds(a in prop::collection::vec(0usize..3, 2..20)) {
            prop_assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
            let shifted: Vec<usize> = a.iter().map(|x| x + 7).collect();
            prop_assert_eq!(rand_index(&a, &shifted).unwrap(), 1.0);
        }
    }
}
