use serde::{Deserialize, Serialize};

use crate::env::{EnvError, Scenario};

/// Default tolerance on each simplex group's sum.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// A hybrid allocation: stacked compute and radio fractions.
///
/// Every innermost vector is a probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// `node_compute[n][j]`: share of node `n`'s server offered to node `j`.
    pub node_compute: Vec<Vec<f64>>,
    /// `slice_compute[n][s]`.
    pub slice_compute: Vec<Vec<f64>>,
    /// `user_compute[n][s][k]` over the users of slice `s`.
    pub user_compute: Vec<Vec<Vec<f64>>>,
    /// `slice_rb[n][s]`.
    pub slice_rb: Vec<Vec<f64>>,
    /// `user_rb[n][s][k]`.
    pub user_rb: Vec<Vec<Vec<f64>>>,
}

fn uniform(len: usize) -> Vec<f64> {
    vec![1.0 / len as f64; len]
}

impl Action {
    /// Every group uniform.
    pub fn uniform(scenario: &Scenario) -> Self {
        let n = scenario.n_nodes();
        Action {
            node_compute: vec![uniform(n); n],
            slice_compute: scenario.nodes.iter().map(|node| uniform(node.slices.len())).collect(),
            user_compute: scenario
                .nodes
                .iter()
                .map(|node| node.slices.iter().map(|s| uniform(s.users.len())).collect())
                .collect(),
            slice_rb: scenario.nodes.iter().map(|node| uniform(node.slices.len())).collect(),
            user_rb: scenario
                .nodes
                .iter()
                .map(|node| node.slices.iter().map(|s| uniform(s.users.len())).collect())
                .collect(),
        }
    }

    /// Forces `node_compute[n][j] = 1{j = n}`: no node lends compute.
    pub fn project_noncooperative(&mut self) {
        for (n, row) in self.node_compute.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j == n { 1.0 } else { 0.0 };
            }
        }
    }

    pub fn is_noncooperative(&self) -> bool {
        self.node_compute
            .iter()
            .enumerate()
            .all(|(n, row)| row.iter().enumerate().all(|(j, &v)| v == if j == n { 1.0 } else { 0.0 }))
    }

    /// Iterates over every simplex group with a label for diagnostics.
    pub fn groups(&self) -> impl Iterator<Item = (String, &[f64])> {
        let nc = self.node_compute.iter().enumerate().map(|(n, g)| (format!("node_compute[{n}]"), g.as_slice()));
        let sc = self.slice_compute.iter().enumerate().map(|(n, g)| (format!("slice_compute[{n}]"), g.as_slice()));
        let sr = self.slice_rb.iter().enumerate().map(|(n, g)| (format!("slice_rb[{n}]"), g.as_slice()));
        let uc = self.user_compute.iter().enumerate().flat_map(|(n, slices)| {
            slices.iter().enumerate().map(move |(s, g)| (format!("user_compute[{n}][{s}]"), g.as_slice()))
        });
        let ur = self.user_rb.iter().enumerate().flat_map(|(n, slices)| {
            slices.iter().enumerate().map(move |(s, g)| (format!("user_rb[{n}][{s}]"), g.as_slice()))
        });
        nc.chain(sc).chain(sr).chain(uc).chain(ur)
    }

    /// Largest absolute deviation of any group sum from 1.
    pub fn max_simplex_error(&self) -> f64 {
        self.groups().map(|(_, g)| (g.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Checks the layout against the scenario and each group against the simplex.
    pub fn validate(&self, scenario: &Scenario, tol: f64) -> Result<(), EnvError> {
        let n = scenario.n_nodes();
        let shape_err = |what: &str| EnvError::Shape(format!("action {what} does not match the scenario"));
        if self.node_compute.len() != n || self.node_compute.iter().any(|r| r.len() != n) {
            return Err(shape_err("node_compute"));
        }
        for (field, outer) in [("slice_compute", &self.slice_compute), ("slice_rb", &self.slice_rb)] {
            if outer.len() != n || outer.iter().zip(&scenario.nodes).any(|(g, node)| g.len() != node.slices.len()) {
                return Err(shape_err(field));
            }
        }
        for (field, outer) in [("user_compute", &self.user_compute), ("user_rb", &self.user_rb)] {
            let ok = outer.len() == n
                && outer.iter().zip(&scenario.nodes).all(|(slices, node)| {
                    slices.len() == node.slices.len()
                        && slices.iter().zip(&node.slices).all(|(g, s)| g.len() == s.users.len())
                });
            if !ok {
                return Err(shape_err(field));
            }
        }
        for (label, group) in self.groups() {
            if group.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(EnvError::Simplex(format!("{label} has a negative or non-finite entry")));
            }
            let err = (group.iter().sum::<f64>() - 1.0).abs();
            if err > tol {
                return Err(EnvError::Simplex(format!("{label} sums to 1 {err:+e}")));
            }
        }
        Ok(())
    }
}
