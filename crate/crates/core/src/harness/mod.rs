//! Experiment configuration, scenario gating, sweeps and reports.

mod report;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    evaluate, train, ActionLayout, Agent, AgentConfig, AgentError, AgentKind, EpisodeLog, Pads, TrainingConfig,
};
use crate::env::{EnvError, Environment, Scenario, ScenarioConfig};
use crate::topology::{build_graph, build_layout, propagation_operator_with, Graph, SquareMatrix};

pub use report::{read_reports, summarize, table_csv, write_reports, EvalReport, Summary, SummaryRow, SummaryTable, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The three network settings the experiments compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    /// Cooperative multi-node network.
    #[default]
    CoopMulti,
    /// One isolated node; the graph is the single vertex.
    SingleNode,
    /// Several nodes that never share compute.
    NoncoopMulti,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::CoopMulti, ScenarioId::SingleNode, ScenarioId::NoncoopMulti];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::CoopMulti => "coop-multi",
            ScenarioId::SingleNode => "single-node",
            ScenarioId::NoncoopMulti => "noncoop-multi",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`; expected coop-multi, single-node or noncoop-multi"))
    }
}

/// Values swept over; an empty axis keeps the base scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub users: Vec<usize>,
    pub nodes: Vec<usize>,
    pub compute_hz: Vec<f64>,
    pub rb_count: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub nodes: usize,
    pub users: usize,
    pub compute_hz: f64,
    pub rb_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub scenario: ScenarioId,
    pub agents: Vec<AgentKind>,
    pub sweep: SweepAxes,
    pub eval_episodes: usize,
    /// Defaults to the scenario's window length.
    pub eval_steps: Option<usize>,
    /// Seeds node placement, user sampling, network initialization and training.
    pub train_seed: u64,
    /// Seeds evaluation episodes; shared by every agent.
    pub eval_seed: u64,
    /// Sweep points evaluated concurrently.
    pub workers: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            scenario: ScenarioId::CoopMulti,
            agents: AgentKind::ALL.to_vec(),
            sweep: SweepAxes::default(),
            eval_episodes: 100,
            eval_steps: None,
            train_seed: 0,
            eval_seed: 1,
            workers: 1,
        }
    }
}

/// A complete run description, one TOML/JSON table per part.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    pub training: TrainingConfig,
    pub experiment: ExperimentSettings,
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Experiment {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Reads TOML, or JSON when the extension is `.json`, and validates.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let exp = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text)?,
            _ => Self::from_toml_str(&text)?,
        };
        exp.validate()?;
        Ok(exp)
    }

    /// Switches to `id`, imposing its structure: one node and no links for
    /// the single-node case, no links for the non-cooperative case.
    pub fn force_scenario(&mut self, id: ScenarioId) {
        self.experiment.scenario = id;
        match id {
            ScenarioId::SingleNode => {
                self.scenario.nodes = 1;
                self.scenario.max_neighbors = 0;
                self.experiment.sweep.nodes.clear();
            }
            ScenarioId::NoncoopMulti => self.scenario.max_neighbors = 0,
            ScenarioId::CoopMulti => {}
        }
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let base = &self.scenario;
        let axis = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
        let axis_f = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let sweep = &self.experiment.sweep;
        let mut points = Vec::new();
        for &nodes in &axis(&sweep.nodes, base.nodes) {
            let users = if sweep.users.is_empty() {
                vec![base.users * nodes / base.nodes]
            } else {
                sweep.users.clone()
            };
            for &users in &users {
                for &compute_hz in &axis_f(&sweep.compute_hz, base.compute_hz) {
                    for &rb_count in &axis_f(&sweep.rb_count, base.rb_count) {
                        points.push(SweepPoint {
                            nodes,
                            users,
                            compute_hz,
                            rb_count,
                        });
                    }
                }
            }
        }
        points
    }

    pub fn point_config(&self, point: &SweepPoint) -> ScenarioConfig {
        let mut cfg = self.scenario.clone();
        cfg.nodes = point.nodes;
        cfg.users = point.users;
        cfg.compute_hz = point.compute_hz;
        cfg.rb_count = point.rb_count;
        cfg.max_neighbors = cfg.max_neighbors.min(point.nodes.saturating_sub(1));
        cfg
    }

    /// Action-layout pads shared by every sweep point, so agents of one kind
    /// have the same shape across the sweep. Explicit pads take precedence.
    pub fn pads(&self) -> Pads {
        let points = self.sweep_points();
        let configs: Vec<ScenarioConfig> = points.iter().map(|p| self.point_config(p)).collect();
        let user_max = configs
            .iter()
            .flat_map(|c| c.users_per_node())
            .max()
            .unwrap_or(0);
        let given = self.agent.pads;
        Pads {
            nodes: given.nodes.or(points.iter().map(|p| p.nodes).max()),
            slices: given.slices.or(Some(self.scenario.slices_per_node[1])),
            users: given.users.or(Some(user_max)),
        }
    }

    pub fn steps_per_episode(&self) -> usize {
        self.training.steps_per_episode.unwrap_or(self.scenario.window)
    }

    pub fn eval_steps(&self) -> usize {
        self.experiment.eval_steps.unwrap_or(self.scenario.window)
    }

    /// Rejects inconsistent experiments before anything runs.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let s = &self.experiment;
        self.training.validate()?;
        if s.agents.is_empty() {
            return Err(HarnessError::Invalid("experiment.agents is empty".into()));
        }
        if s.eval_episodes == 0 {
            return Err(HarnessError::Invalid("experiment.eval_episodes must be positive".into()));
        }
        if s.eval_steps == Some(0) {
            return Err(HarnessError::Invalid("experiment.eval_steps must be positive".into()));
        }
        if s.workers == 0 {
            return Err(HarnessError::Invalid("experiment.workers must be positive".into()));
        }
        if let Some(b) = self.agent.network.logit_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(HarnessError::Invalid(format!(
                    "agent.network.logit_bound must be positive and finite, got {b}"
                )));
            }
        }
        self.scenario.validate()?;
        match s.scenario {
            ScenarioId::SingleNode if self.scenario.nodes != 1 || s.sweep.nodes.iter().any(|&n| n != 1) => {
                return Err(HarnessError::Invalid(format!(
                    "single-node needs scenario.nodes = 1, got {}",
                    self.scenario.nodes
                )));
            }
            ScenarioId::NoncoopMulti if self.scenario.max_neighbors > 0 => {
                return Err(HarnessError::Invalid(format!(
                    "noncoop-multi needs scenario.max_neighbors = 0, got {}",
                    self.scenario.max_neighbors
                )));
            }
            _ => {}
        }
        for point in self.sweep_points() {
            self.point_config(&point).validate()?;
        }
        Ok(())
    }
}

/// Checks that a scenario's graph has the structure its setting implies:
/// `[1]` for a single node, the identity without cooperation.
pub fn check_structure(id: ScenarioId, graph: &Graph) -> Result<(), HarnessError> {
    let n = graph.n_nodes();
    let ok = match id {
        ScenarioId::SingleNode => n == 1 && graph.weighted_adjacency.values == [1.0],
        ScenarioId::NoncoopMulti => graph.weighted_adjacency == SquareMatrix::identity(n),
        ScenarioId::CoopMulti => graph.weighted_adjacency.is_symmetric(),
    };
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Invalid(format!("{id} scenario built a graph of the wrong structure")))
    }
}

/// Everything an agent needs at one sweep point.
#[derive(Debug, Clone)]
pub struct PointSetup {
    pub point: SweepPoint,
    pub scenario: Scenario,
    pub layout: ActionLayout,
    pub propagation: SquareMatrix,
}

/// Places nodes, samples users and fixes the action layout for sweep point
/// `index`. Every agent at the point shares the result.
pub fn setup_point(exp: &Experiment, index: usize, point: &SweepPoint) -> Result<PointSetup, HarnessError> {
    let id = exp.experiment.scenario;
    let cfg = exp.point_config(point);
    let seed = mix(exp.experiment.train_seed, index as u64);
    let nodes = build_layout(&cfg, seed)?;
    let graph = build_graph(&nodes, cfg.max_neighbors, cfg.coop_penalty);
    check_structure(id, &graph)?;
    let propagation = propagation_operator_with(&graph, exp.agent.gcn_operator).matrix;
    let scenario = Scenario::sample(&cfg, graph, seed)?;
    let layout = ActionLayout::new(&scenario, exp.pads(), id == ScenarioId::NoncoopMulti)?;
    Ok(PointSetup {
        point: point.clone(),
        scenario,
        layout,
        propagation,
    })
}

/// Builds an agent and trains it when it learns.
pub fn train_agent(exp: &Experiment, setup: &PointSetup, kind: AgentKind) -> Result<(Agent, Vec<EpisodeLog>), HarnessError> {
    let mut agent = Agent::new(
        kind,
        setup.layout.clone(),
        &setup.propagation,
        &exp.agent.network,
        &exp.training,
        exp.experiment.train_seed,
    )?;
    let mut log = Vec::new();
    if let Agent::Learner(learner) = &mut agent {
        let mut env = Environment::new(setup.scenario.clone(), exp.experiment.train_seed);
        let mut training = exp.training.clone();
        training.seed = exp.experiment.train_seed;
        log = train(&mut env, learner, &training)?;
    }
    Ok((agent, log))
}

/// Noise-free evaluation. In the non-cooperative setting every executed
/// action is checked against the no-lending constraint.
pub fn evaluate_agent(
    exp: &Experiment,
    setup: &PointSetup,
    agent: &mut Agent,
    train_episodes: usize,
) -> Result<EvalReport, HarnessError> {
    let id = exp.experiment.scenario;
    let mut env = Environment::new(setup.scenario.clone(), exp.experiment.eval_seed);
    let mut violations = 0usize;
    let episodes = evaluate(
        &mut env,
        agent,
        exp.experiment.eval_episodes,
        exp.eval_steps(),
        exp.experiment.eval_seed,
        |a| {
            if id == ScenarioId::NoncoopMulti && !a.is_noncooperative() {
                violations += 1;
            }
        },
    )?;
    if violations > 0 {
        return Err(HarnessError::Invalid(format!(
            "{violations} actions lent compute in the non-cooperative setting"
        )));
    }
    Ok(EvalReport::new(
        id,
        agent.kind(),
        setup.point.clone(),
        episodes,
        agent.actor_param_count(),
        agent.critic_param_count(),
        train_episodes,
    ))
}

pub fn write_training_log(path: &Path, log: &[EpisodeLog]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run_point(exp: &Experiment, index: usize, point: &SweepPoint, out: Option<&Path>) -> Result<Vec<EvalReport>, HarnessError> {
    let setup = setup_point(exp, index, point)?;
    let mut reports = Vec::with_capacity(exp.experiment.agents.len());
    for &kind in &exp.experiment.agents {
        log::info!("point {index} ({} nodes, {} users): {kind}", point.nodes, point.users);
        let (mut agent, train_log) = train_agent(exp, &setup, kind)?;
        if let (Some(out), Agent::Learner(learner)) = (out, &agent) {
            let dir = out.join(format!("point-{index}")).join(kind.name());
            write_training_log(&dir.join("train_log.csv"), &train_log)?;
            learner.save(
                &dir.join("checkpoint"),
                serde_json::json!({ "agent": kind, "point": point }),
            )?;
        }
        reports.push(evaluate_agent(exp, &setup, &mut agent, train_log.len())?);
    }
    Ok(reports)
}

/// Trains and evaluates every agent at every sweep point.
///
/// Points run on up to `workers` threads; the returned reports are ordered
/// by point, then by the configured agent order, whatever the scheduling.
/// With `out`, checkpoints, training logs and summary tables are written.
pub fn run_experiment(exp: &Experiment, out: Option<&Path>) -> Result<Vec<EvalReport>, HarnessError> {
    exp.validate()?;
    let points = exp.sweep_points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.experiment.workers)
        .build()
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let per_point: Vec<Result<Vec<EvalReport>, HarnessError>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_point(exp, i, p, out))
            .collect()
    });
    let mut reports = Vec::new();
    for r in per_point {
        reports.extend(r?);
    }
    if let Some(out) = out {
        write_reports(out, &reports)?;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Experiment {
        let mut exp = Experiment::default();
        exp.scenario.nodes = 2;
        exp.scenario.users = 12;
        exp.scenario.max_neighbors = 1;
        exp.scenario.window = 5;
        exp.experiment.eval_episodes = 2;
        exp.experiment.agents = vec![AgentKind::Random];
        exp
    }

    #[test]
    fn cartesian_sweep() {
        let mut exp = tiny();
        exp.experiment.sweep.nodes = vec![1, 2];
        exp.experiment.sweep.rb_count = vec![5.0, 10.0, 20.0];
        let points = exp.sweep_points();
        assert_eq!(points.len(), 6);
        assert_eq!(points[0].users, 6);
        assert_eq!(points[5].users, 12);
        assert_eq!(exp.point_config(&points[0]).max_neighbors, 0);
    }

    #[test]
    fn noncooperative_with_links_is_rejected() {
        let mut exp = tiny();
        exp.experiment.scenario = ScenarioId::NoncoopMulti;
        assert!(matches!(exp.validate(), Err(HarnessError::Invalid(_))));
        exp.force_scenario(ScenarioId::NoncoopMulti);
        exp.validate().unwrap();
    }

    #[test]
    fn single_node_forces_one_node() {
        let mut exp = tiny();
        exp.experiment.sweep.nodes = vec![2, 4];
        exp.force_scenario(ScenarioId::SingleNode);
        exp.validate().unwrap();
        let setup = setup_point(&exp, 0, &exp.sweep_points()[0]).unwrap();
        assert_eq!(setup.scenario.graph.weighted_adjacency.values, vec![1.0]);
    }

    #[test]
    fn random_agent_runs_without_training() {
        let exp = tiny();
        let reports = run_experiment(&exp, None).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].train_episodes, 0);
        assert_eq!(reports[0].episodes.len(), 2);
        assert!(reports[0].episodes.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Experiment::from_toml_str("[experiment]\nbogus = 1\n").is_err());
        assert!(Experiment::from_toml_str("").is_ok());
    }
}
