//! Edge-node placement and the weighted cooperation graph.
//!
//! Nodes are dropped uniformly in a `d0 x d0` square. Each node links to its
//! `A_max` nearest peers and the link set is then symmetrized by union, so a
//! node can end up with more than `A_max` links (a "hub" that is everyone's
//! nearest neighbor). What is guaranteed is that every node keeps its own
//! `min(A_max, N - 1)` nearest peers and that the graph has at most
//! `N * A_max` undirected edges.
//!
//! Edge weights follow `delta = (d_min / d) * penalty` where `d_min` is the
//! shortest edge actually present. Self-weights are 1 and unlinked pairs are 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, ScenarioConfig};

/// Positions of the edge nodes plus the coverage geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    pub positions: Vec<[f64; 2]>,
    pub area_side_m: f64,
    pub coverage_radius_m: f64,
    pub user_ring_m: [f64; 2],
}

impl NodeLayout {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let [xa, ya] = self.positions[a];
        let [xb, yb] = self.positions[b];
        (xa - xb).hypot(ya - yb)
    }
}

/// Samples node positions uniformly in the square. Deterministic per seed.
pub fn build_layout(config: &ScenarioConfig, seed: u64) -> Result<NodeLayout, EnvError> {
    if config.nodes == 0 {
        return Err(EnvError::Config {
            field: "nodes".into(),
            reason: "at least one edge node is required".into(),
        });
    }
    let g = &config.geometry;
    if !(g.user_ring_min_m >= 0.0 && g.user_ring_min_m < g.user_ring_max_m && g.user_ring_max_m <= g.coverage_radius_m) {
        return Err(EnvError::Config {
            field: "geometry.user_ring_min_m".into(),
            reason: "need 0 <= min < max <= coverage radius".into(),
        });
    }
    if g.area_side_m.is_nan() || g.area_side_m <= 0.0 {
        return Err(EnvError::Config {
            field: "geometry.area_side_m".into(),
            reason: "must be positive".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..config.nodes)
        .map(|_| [rng.random_range(0.0..=g.area_side_m), rng.random_range(0.0..=g.area_side_m)])
        .collect();
    Ok(NodeLayout {
        positions,
        area_side_m: g.area_side_m,
        coverage_radius_m: g.coverage_radius_m,
        user_ring_m: [g.user_ring_min_m, g.user_ring_max_m],
    })
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, values: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        SquareMatrix {
            n,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// The cooperation graph of the edge nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub positions: Vec<[f64; 2]>,
    /// Binary adjacency with unit diagonal (`lambda`).
    pub adjacency: SquareMatrix,
    /// Edge weights `delta`, 1 on the diagonal, 0 where unlinked.
    pub edge_weights: SquareMatrix,
    /// `adjacency ⊙ edge_weights`.
    pub weighted_adjacency: SquareMatrix,
    pub max_neighbors: usize,
}

impl Graph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.n
    }

    /// Off-diagonal link count of node `i`.
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n_nodes()).filter(|&j| j != i && self.adjacency.get(i, j) != 0.0).count()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n_nodes()).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// Links each node to its `max_neighbors` nearest peers, symmetrizes by union
/// and assigns distance-penalized edge weights.
pub fn build_graph(layout: &NodeLayout, max_neighbors: usize, penalty: f64) -> Graph {
    let n = layout.len();
    assert!(max_neighbors <= n, "max_neighbors ({max_neighbors}) exceeds node count ({n})");
    assert!(penalty > 0.0 && penalty <= 1.0, "penalty must lie in (0, 1]");

    let mut adjacency = SquareMatrix::identity(n);
    let k = max_neighbors.min(n.saturating_sub(1));
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (layout.distance(i, j), j)).collect();
        // ties broken by index so the graph is a pure function of the layout
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            adjacency.set(i, j, 1.0);
            adjacency.set(j, i, 1.0);
        }
    }

    let shortest_edge = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .filter(|&(i, j)| adjacency.get(i, j) != 0.0)
        .map(|(i, j)| layout.distance(i, j))
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);

    let mut edge_weights = SquareMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            if i == j || adjacency.get(i, j) == 0.0 {
                continue;
            }
            let d = layout.distance(i, j);
            let w = if d == 0.0 { 1.0 } else { shortest_edge / d * penalty };
            edge_weights.set(i, j, w);
        }
    }

    let mut weighted = SquareMatrix::zeros(n);
    for (w, (a, d)) in weighted
        .values
        .iter_mut()
        .zip(adjacency.values.iter().zip(&edge_weights.values))
    {
        *w = a * d;
    }

    Graph {
        positions: layout.positions.clone(),
        adjacency,
        edge_weights,
        weighted_adjacency: weighted,
        max_neighbors,
    }
}

/// Which adjacency feeds the GCN propagation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GcnOperator {
    /// Binary adjacency with self-loops.
    #[default]
    Binary,
    /// Distance-weighted adjacency.
    Weighted,
}

/// `D^{-1/2} A D^{-1/2}` together with the degree diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    pub matrix: SquareMatrix,
    pub degree: Vec<f64>,
}

pub fn propagation_operator(graph: &Graph) -> PropagationOperator {
    normalize(&graph.adjacency)
}

/// Propagation operator over the chosen adjacency.
pub fn propagation_operator_with(graph: &Graph, kind: GcnOperator) -> PropagationOperator {
    match kind {
        GcnOperator::Binary => normalize(&graph.adjacency),
        GcnOperator::Weighted => normalize(&graph.weighted_adjacency),
    }
}

fn normalize(a: &SquareMatrix) -> PropagationOperator {
    let n = a.n;
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut matrix = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                matrix.set(i, j, inv_sqrt[i] * v * inv_sqrt[j]);
            }
        }
    }
    PropagationOperator { matrix, degree }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(points: &[[f64; 2]]) -> NodeLayout {
        NodeLayout {
            positions: points.to_vec(),
            area_side_m: 200.0,
            coverage_radius_m: 100.0,
            user_ring_m: [10.0, 100.0],
        }
    }

    #[test]
    fn single_node_layout_inside_square() {
        let cfg = ScenarioConfig { nodes: 1, users: 6, ..Default::default() };
        for seed in 0..20 {
            let l = build_layout(&cfg, seed).unwrap();
            assert_eq!(l.len(), 1);
            let [x, y] = l.positions[0];
            assert!((0.0..=200.0).contains(&x) && (0.0..=200.0).contains(&y));
        }
    }

    #[test]
    fn zero_nodes_rejected() {
        let cfg = ScenarioConfig { nodes: 0, ..Default::default() };
        assert!(build_layout(&cfg, 1).is_err());
    }

    #[test]
    fn layout_is_deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(build_layout(&cfg, 9).unwrap(), build_layout(&cfg, 9).unwrap());
        assert_ne!(build_layout(&cfg, 9).unwrap(), build_layout(&cfg, 10).unwrap());
    }

    #[test]
    fn single_node_graph_is_trivial() {
        let g = build_graph(&layout(&[[50.0, 50.0]]), 1, 0.9);
        assert_eq!(g.weighted_adjacency.values, vec![1.0]);
    }

    #[test]
    fn zero_neighbors_gives_identity() {
        let l = layout(&[[0.0, 0.0], [10.0, 0.0], [0.0, 30.0]]);
        let g = build_graph(&l, 0, 0.9);
        assert_eq!(g.weighted_adjacency, SquareMatrix::identity(3));
    }

    #[test]
    fn two_nodes_weight_is_penalty() {
        let g = build_graph(&layout(&[[0.0, 0.0], [30.0, 40.0]]), 1, 0.9);
        assert_eq!(g.edge_weights.get(0, 1), 0.9);
        assert_eq!(g.edge_weights.get(1, 0), 0.9);
        assert_eq!(g.weighted_adjacency.get(0, 0), 1.0);
    }

    #[test]
    fn hub_can_exceed_max_neighbors() {
        // three leaves all closest to the center node
        let l = layout(&[[100.0, 100.0], [100.0, 120.0], [120.0, 100.0], [80.0, 100.0]]);
        let g = build_graph(&l, 1, 0.9);
        assert_eq!(g.degree(0), 3);
        assert!(g.edge_count() <= 4);
    }

    #[test]
    fn propagation_identity() {
        let l = layout(&[[0.0, 0.0], [100.0, 0.0]]);
        let p = propagation_operator(&build_graph(&l, 0, 0.9));
        assert_eq!(p.matrix, SquareMatrix::identity(2));
    }

    #[test]
    fn propagation_full_pair() {
        let g = build_graph(&layout(&[[0.0, 0.0], [5.0, 0.0]]), 1, 0.5);
        let p = propagation_operator(&g);
        assert_eq!(p.degree, vec![2.0, 2.0]);
        for v in &p.matrix.values {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn graph_json_has_dense_arrays() {
        let g = build_graph(&layout(&[[0.0, 0.0], [5.0, 0.0]]), 1, 0.5);
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["adjacency"]["values"].as_array().unwrap().len(), 4);
        assert_eq!(v["positions"].as_array().unwrap().len(), 2);
    }
}
