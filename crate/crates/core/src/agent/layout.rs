use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autonet::Groups;
use crate::env::{Action, Scenario, FEATURES_PER_USER};

use super::AgentError;

/// Fixed per-node dimensions shared by scenarios of different sizes.
///
/// `None` takes the scenario's own extent. Fixing every pad makes the actor
/// input and output widths, and hence the graph actor's parameter count,
/// independent of the node count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pads {
    pub nodes: Option<usize>,
    pub slices: Option<usize>,
    pub users: Option<usize>,
}

/// Maps between the flat actor output and a structured [`Action`].
///
/// Each node owns a block of `block()` entries laid out as
/// `[c^n | c^{n,s} | c^{n,s,u} | z^{n,s} | z^{n,s,u}]` with widths
/// `pad_nodes, pad_slices, pad_users, pad_slices, pad_users`. User entries are
/// indexed by the node-local user position, so each slice's user group is the
/// contiguous run of its users. Padding entries belong to no group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub n_nodes: usize,
    pub pad_nodes: usize,
    pub pad_slices: usize,
    pub pad_users: usize,
    /// Observation width per node.
    pub obs_width: usize,
    /// When set, node `n`'s compute group is the single entry `n`.
    pub noncooperative: bool,
    /// Node-local user range of every slice.
    slice_users: Vec<Vec<Range<usize>>>,
}

impl ActionLayout {
    pub fn new(scenario: &Scenario, pads: Pads, noncooperative: bool) -> Result<Self, AgentError> {
        let n = scenario.n_nodes();
        let pick = |pad: Option<usize>, actual: usize, what: &str| match pad {
            Some(p) if p < actual => Err(AgentError::Dimension(format!(
                "pad of {p} {what} is smaller than the scenario's {actual}"
            ))),
            Some(p) => Ok(p),
            None => Ok(actual),
        };
        let pad_nodes = pick(pads.nodes, n, "nodes")?;
        let pad_slices = pick(pads.slices, scenario.max_slices_per_node(), "slices")?;
        let pad_users = pick(pads.users, scenario.max_users_per_node(), "users")?;
        let slice_users = scenario
            .nodes
            .iter()
            .map(|node| {
                let first = node.first_user();
                node.slices
                    .iter()
                    .map(|s| s.users[0] - first..s.users[0] - first + s.users.len())
                    .collect()
            })
            .collect();
        Ok(ActionLayout {
            n_nodes: n,
            pad_nodes,
            pad_slices,
            pad_users,
            obs_width: pad_users * (FEATURES_PER_USER + scenario.config.obs_window),
            noncooperative,
            slice_users,
        })
    }

    /// Entries per node.
    pub fn block(&self) -> usize {
        self.pad_nodes + 2 * self.pad_slices + 2 * self.pad_users
    }

    pub fn flat_len(&self) -> usize {
        self.n_nodes * self.block()
    }

    /// Actor input width per node: observation plus the previous action block.
    pub fn feature_width(&self) -> usize {
        self.obs_width + self.block()
    }

    fn offsets(&self) -> [usize; 4] {
        let slice_c = self.pad_nodes;
        let user_c = slice_c + self.pad_slices;
        let slice_z = user_c + self.pad_users;
        let user_z = slice_z + self.pad_slices;
        [slice_c, user_c, slice_z, user_z]
    }

    /// Softmax groups over one flattened action.
    pub fn row_groups(&self) -> Vec<Range<usize>> {
        let [slice_c, user_c, slice_z, user_z] = self.offsets();
        let mut groups = Vec::new();
        for (n, slices) in self.slice_users.iter().enumerate() {
            let o = n * self.block();
            if self.noncooperative {
                groups.push(o + n..o + n + 1);
            } else {
                groups.push(o..o + self.n_nodes);
            }
            groups.push(o + slice_c..o + slice_c + slices.len());
            groups.extend(slices.iter().map(|r| o + user_c + r.start..o + user_c + r.end));
            groups.push(o + slice_z..o + slice_z + slices.len());
            groups.extend(slices.iter().map(|r| o + user_z + r.start..o + user_z + r.end));
        }
        groups
    }

    /// Groups for `batch` flattened actions stacked by rows.
    pub fn groups(&self, batch: usize) -> Groups {
        let row = self.row_groups();
        let len = self.flat_len();
        Arc::new(
            (0..batch)
                .flat_map(|b| row.iter().map(move |r| b * len + r.start..b * len + r.end))
                .collect(),
        )
    }

    /// Uniform distribution over every group; the fixed first previous action.
    pub fn uniform(&self) -> Vec<f64> {
        let mut flat = vec![0.0; self.flat_len()];
        for g in self.row_groups() {
            let v = 1.0 / g.len() as f64;
            flat[g].iter_mut().for_each(|x| *x = v);
        }
        flat
    }

    pub fn decode(&self, flat: &[f64]) -> Result<Action, AgentError> {
        if flat.len() != self.flat_len() {
            return Err(AgentError::Dimension(format!(
                "{} action entries for a layout of {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let [slice_c, user_c, slice_z, user_z] = self.offsets();
        let n = self.n_nodes;
        let mut action = Action {
            node_compute: Vec::with_capacity(n),
            slice_compute: Vec::with_capacity(n),
            user_compute: Vec::with_capacity(n),
            slice_rb: Vec::with_capacity(n),
            user_rb: Vec::with_capacity(n),
        };
        for (node, slices) in self.slice_users.iter().enumerate() {
            let b = &flat[node * self.block()..(node + 1) * self.block()];
            let s = slices.len();
            action.node_compute.push(b[..n].to_vec());
            action.slice_compute.push(b[slice_c..slice_c + s].to_vec());
            action
                .user_compute
                .push(slices.iter().map(|r| b[user_c + r.start..user_c + r.end].to_vec()).collect());
            action.slice_rb.push(b[slice_z..slice_z + s].to_vec());
            action
                .user_rb
                .push(slices.iter().map(|r| b[user_z + r.start..user_z + r.end].to_vec()).collect());
        }
        Ok(action)
    }

    pub fn encode(&self, action: &Action) -> Vec<f64> {
        let [slice_c, user_c, slice_z, user_z] = self.offsets();
        let mut flat = vec![0.0; self.flat_len()];
        for (node, slices) in self.slice_users.iter().enumerate() {
            let b = &mut flat[node * self.block()..(node + 1) * self.block()];
            b[..self.n_nodes].copy_from_slice(&action.node_compute[node]);
            b[slice_c..slice_c + slices.len()].copy_from_slice(&action.slice_compute[node]);
            b[slice_z..slice_z + slices.len()].copy_from_slice(&action.slice_rb[node]);
            for (s, r) in slices.iter().enumerate() {
                b[user_c + r.start..user_c + r.end].copy_from_slice(&action.user_compute[node][s]);
                b[user_z + r.start..user_z + r.end].copy_from_slice(&action.user_rb[node][s]);
            }
        }
        flat
    }
}
