use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attributes of one base station used to score affinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsAttributes {
    pub position: (f64, f64),
    pub backhaul_capacity: f64,
    pub coverage_radius: f64,
    pub traffic_histogram: Vec<f64>,
}

/// Mixing weights of the four affinity components plus the distance scale
/// and the pruning floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinityWeights {
    pub proximity: f64,
    pub backhaul: f64,
    pub overlap: f64,
    pub traffic: f64,
    pub distance_scale: f64,
    pub floor: f64,
}

impl Default for AffinityWeights {
    fn default() -> Self {
        Self {
            proximity: 0.25,
            backhaul: 0.25,
            overlap: 0.25,
            traffic: 0.25,
            distance_scale: 1.0,
            floor: 1e-6,
        }
    }
}

/// Weighted undirected graph over base stations, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityGraph {
    n: usize,
    w: Vec<f64>,
}

impl AffinityGraph {
    pub fn empty(n: usize) -> Self {
        Self { n, w: vec![0.0; n * n] }
    }

    /// Builds a graph from `(i, j, weight)` triples; repeated pairs add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::UnknownNode(i.max(j)));
            }
            if i == j {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("edge ({i},{j}) has weight {w}")));
            }
            g.w[i * n + j] += w;
            g.w[j * n + i] += w;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.w[i * self.n..(i + 1) * self.n]
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w > 0.0)
            .map(|(j, &w)| (j, w))
    }

    /// Weighted degree.
    pub fn degree(&self, i: usize) -> f64 {
        self.w[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// Sum of edge weights, each edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.edges().iter().map(|e| e.2).sum()
    }

    /// Edges with `i < j` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let w = self.weight(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }
}

/// Intersection area of two discs with radii `r1`, `r2` at distance `d`.
pub fn circle_overlap_area(r1: f64, r2: f64, d: f64) -> f64 {
    use std::f64::consts::PI;
    if r1 <= 0.0 || r2 <= 0.0 || d >= r1 + r2 {
        return 0.0;
    }
    let (small, big) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    if d <= big - small {
        return PI * small * small;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0).sqrt();
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// The four normalized affinity components between two stations:
/// proximity, backhaul, coverage overlap, traffic similarity.
pub fn affinity_components(a: &BsAttributes, b: &BsAttributes, cap_max: f64, distance_scale: f64) -> [f64; 4] {
    let d = (a.position.0 - b.position.0).hypot(a.position.1 - b.position.1);
    let proximity = if d.is_finite() { (-d / distance_scale).exp() } else { 0.0 };
    let backhaul = if cap_max > 0.0 {
        (a.backhaul_capacity.min(b.backhaul_capacity) / cap_max).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let smaller = a.coverage_radius.min(b.coverage_radius);
    let overlap = if smaller > 0.0 && d.is_finite() {
        circle_overlap_area(a.coverage_radius, b.coverage_radius, d) / (std::f64::consts::PI * smaller * smaller)
    } else {
        0.0
    };
    [proximity, backhaul, overlap.clamp(0.0, 1.0), cosine(&a.traffic_histogram, &b.traffic_histogram)]
}

pub fn build_affinity(attrs: &[BsAttributes], weights: &AffinityWeights) -> Result<AffinityGraph> {
    if attrs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            actual: attrs.len(),
        });
    }
    let mix = [weights.proximity, weights.backhaul, weights.overlap, weights.traffic];
    if mix.iter().any(|w| !(*w >= 0.0)) || !(weights.distance_scale > 0.0) {
        return Err(Error::invalid("affinity weights must be >= 0 and distance_scale > 0"));
    }
    let cap_max = attrs.iter().map(|a| a.backhaul_capacity).fold(0.0, f64::max);
    let n = attrs.len();
    let mut g = AffinityGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let c = affinity_components(&attrs[i], &attrs[j], cap_max, weights.distance_scale);
            let w: f64 = mix.iter().zip(&c).map(|(m, c)| m * c).sum();
            if w >= weights.floor && w > 0.0 {
                g.w[i * n + j] = w;
                g.w[j * n + i] = w;
            }
        }
    }
    Ok(g)
}
