use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentKind;

use super::{HarnessError, ScenarioId, SweepPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Box-plot statistics of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    /// Statistics of `xs`; an empty sample yields zeros.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Summary {
                count: 0,
                mean: 0.0,
                variance: 0.0,
                min: 0.0,
                q1: 0.0,
                median: 0.0,
                q3: 0.0,
                max: 0.0,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            count: xs.len(),
            mean,
            variance,
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Evaluation of one agent at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub scenario: ScenarioId,
    pub agent: AgentKind,
    pub point: SweepPoint,
    /// Mean SSR of every evaluation episode, in order.
    pub episodes: Vec<f64>,
    pub summary: Summary,
    pub actor_params: usize,
    pub critic_params: usize,
    pub train_episodes: usize,
}

impl EvalReport {
    pub fn new(
        scenario: ScenarioId,
        agent: AgentKind,
        point: SweepPoint,
        episodes: Vec<f64>,
        actor_params: usize,
        critic_params: usize,
        train_episodes: usize,
    ) -> Self {
        EvalReport {
            schema_version: SCHEMA_VERSION,
            scenario,
            agent,
            summary: Summary::of(&episodes),
            point,
            episodes,
            actor_params,
            critic_params,
            train_episodes,
        }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: ScenarioId,
    pub agent: AgentKind,
    pub nodes: usize,
    pub users: usize,
    pub compute_hz: f64,
    pub rb_count: f64,
    pub episodes: usize,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub actor_params: usize,
    pub critic_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub schema_version: u32,
    pub rows: Vec<SummaryRow>,
    /// Per-episode SSR for box plots, in row order.
    pub samples: Vec<Vec<f64>>,
}

pub fn summarize(reports: &[EvalReport]) -> SummaryTable {
    let rows = reports
        .iter()
        .map(|r| SummaryRow {
            scenario: r.scenario,
            agent: r.agent,
            nodes: r.point.nodes,
            users: r.point.users,
            compute_hz: r.point.compute_hz,
            rb_count: r.point.rb_count,
            episodes: r.summary.count,
            mean: r.summary.mean,
            variance: r.summary.variance,
            min: r.summary.min,
            q1: r.summary.q1,
            median: r.summary.median,
            q3: r.summary.q3,
            max: r.summary.max,
            actor_params: r.actor_params,
            critic_params: r.critic_params,
        })
        .collect();
    SummaryTable {
        schema_version: SCHEMA_VERSION,
        rows,
        samples: reports.iter().map(|r| r.episodes.clone()).collect(),
    }
}

pub fn table_csv(table: &SummaryTable) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table.rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

/// Writes `summary.csv`, `summary.json` and `reports.json` into `dir`.
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<SummaryTable, HarnessError> {
    fs::create_dir_all(dir)?;
    let table = summarize(reports);
    fs::write(dir.join("summary.csv"), table_csv(&table)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&table)?)?;
    fs::write(dir.join("reports.json"), serde_json::to_string_pretty(reports)?)?;
    Ok(table)
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let reports: Vec<EvalReport> = serde_json::from_str(&text)?;
    if let Some(r) = reports.iter().find(|r| r.schema_version != SCHEMA_VERSION) {
        return Err(HarnessError::Invalid(format!(
            "{} uses report schema {}, expected {SCHEMA_VERSION}",
            path.display(),
            r.schema_version
        )));
    }
    Ok(reports)
}
