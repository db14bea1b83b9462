use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mecslice::agent::{Agent, AgentKind};
use mecslice::harness::{
    evaluate_agent, read_reports, run_experiment, setup_point, summarize, table_csv, train_agent, write_reports,
    write_training_log, Experiment, ScenarioId,
};

#[derive(Parser)]
#[command(name = "mecslice", version, about = "MEC-assisted RAN slicing simulator and resource-allocation agents")]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML, or JSON by extension). Defaults to the built-in values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the experiment's scenario and imposes its structure.
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Overrides the training and placement seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent at the first sweep point.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "rgrl")]
        agent: AgentKind,
        /// Directory for `checkpoint.{bin,json}` and `train_log.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one agent at the first sweep point.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "rgrl")]
        agent: AgentKind,
        /// Checkpoint stem written by `train`; required for learning agents.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every configured agent over the sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the summary tables from a `reports.json`.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate an experiment file.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Experiment> {
    let mut exp = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match path.extension().and_then(|e| e.to_str()) {
                Some("json") => Experiment::from_json_str(&text)?,
                _ => Experiment::from_toml_str(&text)?,
            }
        }
        None => Experiment::default(),
    };
    if let Some(id) = common.scenario {
        exp.force_scenario(id);
    }
    if let Some(seed) = common.seed {
        exp.experiment.train_seed = seed;
    }
    exp.validate()?;
    Ok(exp)
}

fn print_table(reports: &[mecslice::harness::EvalReport]) -> Result<()> {
    let csv = table_csv(&summarize(reports))?;
    std::io::stdout().write_all(&csv)?;
    Ok(())
}

fn train_cmd(common: &Common, kind: AgentKind, out: &Path) -> Result<()> {
    if kind == AgentKind::Random {
        bail!("the random agent has nothing to train");
    }
    let exp = load(common)?;
    let point = exp.sweep_points().remove(0);
    let setup = setup_point(&exp, 0, &point)?;
    let (agent, log) = train_agent(&exp, &setup, kind)?;
    fs::create_dir_all(out)?;
    write_training_log(&out.join("train_log.csv"), &log)?;
    if let Agent::Learner(learner) = &agent {
        learner.save(
            &out.join("checkpoint"),
            serde_json::json!({ "agent": kind, "point": point, "experiment": exp }),
        )?;
    }
    if let Some(last) = log.last() {
        println!("{kind}: {} episodes, final mean reward {:.4}", log.len(), last.mean_reward);
    }
    Ok(())
}

fn eval_cmd(common: &Common, kind: AgentKind, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let exp = load(common)?;
    let point = exp.sweep_points().remove(0);
    let setup = setup_point(&exp, 0, &point)?;
    let mut agent = Agent::new(
        kind,
        setup.layout.clone(),
        &setup.propagation,
        &exp.agent.network,
        &exp.training,
        exp.experiment.train_seed,
    )?;
    if let Agent::Learner(learner) = &mut agent {
        let stem = checkpoint.context("evaluating a learning agent needs --checkpoint")?;
        learner.load(stem)?;
    }
    let report = evaluate_agent(&exp, &setup, &mut agent, 0)?;
    let reports = [report];
    if let Some(out) = out {
        write_reports(out, &reports)?;
    }
    print_table(&reports)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, agent, out } => train_cmd(&common, agent, &out),
        Command::Eval {
            common,
            agent,
            checkpoint,
            out,
        } => eval_cmd(&common, agent, checkpoint.as_deref(), out.as_deref()),
        Command::Sweep { common, out } => {
            let exp = load(&common)?;
            let reports = run_experiment(&exp, Some(&out))?;
            print_table(&reports)
        }
        Command::Report { input, out } => {
            let reports = read_reports(&input)?;
            if let Some(out) = out {
                write_reports(&out, &reports)?;
            }
            print_table(&reports)
        }
        Command::ValidateConfig { common } => {
            let exp = load(&common)?;
            println!(
                "ok: {} scenario, {} sweep point(s), {} agent(s)",
                exp.experiment.scenario,
                exp.sweep_points().len(),
                exp.experiment.agents.len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
