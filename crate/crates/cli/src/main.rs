//! Command-line front end: partition, simulate, train, evaluate.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use regiontsc::harness::{
    self, eval_seeds, evaluate, load_agent, run_episode, Controller, ExperimentConfig, FixedTime, Greedy,
    HarnessError, MaxPressure, RandomPhases,
};
use regiontsc::net::{NetError, RoadNetwork};
use regiontsc::neural::NeuralError;
use regiontsc::partition::{
    construct_regions, solve_min_dominating_set, AssignmentOrder, PartitionError,
};
use regiontsc::sim::{FlowSpec, SimConfig, SimError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "regiontsc", version, about = "Regional traffic-signal control lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the minimum dominating set and print the region configuration.
    Partition {
        #[arg(long)]
        net: PathBuf,
        /// Shuffle the leaf-assignment order with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the configuration to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode under a baseline controller.
    Simulate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, value_enum)]
        controller: Baseline,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Episode length in seconds.
        #[arg(long)]
        duration: Option<u32>,
    },
    /// Train the shared agent as described by an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint over seeded episodes.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Where to write eval.json; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Fixed,
    Maxpressure,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {}", describe(&err));
            ExitCode::from(code)
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

/// 3: invalid input, 4: I/O, 5: runtime failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::Io { .. } => 4,
                HarnessError::Net(n) => net_code(n),
                HarnessError::Sim(s) => sim_code(s),
                HarnessError::Neural(n) => neural_code(n),
                HarnessError::Agent(_) | HarnessError::Partition(PartitionError::Timeout { .. }) => 5,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<NetError>() {
            return net_code(e);
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return sim_code(e);
        }
        if let Some(PartitionError::Timeout { .. }) = cause.downcast_ref::<PartitionError>() {
            return 5;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    3
}

fn net_code(e: &NetError) -> u8 {
    match e {
        NetError::Io { .. } => 4,
        _ => 3,
    }
}

fn sim_code(e: &SimError) -> u8 {
    match e {
        SimError::Io { .. } => 4,
        SimError::Net(n) => net_code(n),
        SimError::Invariant { .. } => 5,
        _ => 3,
    }
}

fn neural_code(e: &NeuralError) -> u8 {
    match e {
        NeuralError::Io { .. } => 4,
        _ => 3,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Partition { net, seed, out } => partition(&net, seed, out.as_deref()),
        Command::Simulate {
            net,
            flow,
            controller,
            out,
            seed,
            duration,
        } => simulate(&net, &flow, controller, &out, seed, duration),
        Command::Train { config, out } => train(&config, out),
        Command::Evaluate {
            checkpoint,
            config,
            episodes,
            out,
        } => evaluate_checkpoint(&checkpoint, &config, episodes, out),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn partition(net_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let net = RoadNetwork::load(net_path)?;
    let centers = solve_min_dominating_set(&net)?;
    let order = match seed {
        Some(s) => AssignmentOrder::shuffled(&net, &centers, s)?,
        None => AssignmentOrder::canonical(&net, &centers)?,
    };
    let config = construct_regions(&net, &centers, &order)?;
    let value = json!({
        "domination_number": centers.len(),
        "centers": centers,
        "regions": config.regions,
    });
    emit(&serde_json::to_string_pretty(&value)?)?;
    if let Some(path) = out {
        write_json(path, &serde_json::to_value(&config)?)?;
    }
    Ok(())
}

fn simulate(net_path: &Path, flow_path: &Path, which: Baseline, out: &Path, seed: u64, duration: Option<u32>) -> Result<()> {
    let net = RoadNetwork::load(net_path)?;
    let flow = FlowSpec::load(flow_path)?;
    let mut sim = SimConfig {
        seed,
        ..SimConfig::default()
    };
    if let Some(d) = duration {
        sim.episode_length = d;
    }
    let mut controller: Box<dyn Controller> = match which {
        Baseline::Fixed => Box::new(FixedTime::default_cycle()),
        Baseline::Maxpressure => Box::new(MaxPressure),
        Baseline::Random => Box::new(RandomPhases::new(seed)),
    };
    let outcome = run_episode(&net, &flow, &sim, controller.as_mut())?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let value = json!({
        "controller": controller.name(),
        "seed": seed,
        "episode_length": sim.episode_length,
        "reward": outcome.reward,
        "att": outcome.att,
        "aql": outcome.aql,
        "tp": outcome.tp,
    });
    write_json(&out.join("metrics.json"), &value)?;
    emit(&serde_json::to_string(&value)?)?;
    Ok(())
}

fn train(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let Some(dir) = out.or_else(|| cfg.output.clone()) else {
        bail!("no output directory: pass --out or set `output` in the config");
    };
    let result = harness::train(&cfg, Some(&dir)).with_context(|| format!("training run in {}", dir.display()))?;
    if let Some(last) = result.records.last() {
        eprintln!(
            "trained {} episodes; last reward {:.3}, AQL {:.3}, TP {}",
            result.records.len(),
            last.reward,
            last.aql,
            last.tp
        );
    }
    Ok(())
}

fn evaluate_checkpoint(checkpoint: &Path, config: &Path, episodes: usize, out: Option<PathBuf>) -> Result<()> {
    if episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let cfg = ExperimentConfig::load(config)?;
    let setup = harness::setup(&cfg)?;
    let agent = load_agent(&cfg, &setup, checkpoint)?;
    let mut greedy = Greedy::new(&agent, &setup.regions, setup.lanes);
    let summary = evaluate(&mut greedy, &setup.net, &setup.flow, &cfg.sim, &eval_seeds(cfg.seed, episodes))?;
    let value = serde_json::to_value(&summary)?;
    let dir = out.unwrap_or_else(|| checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("eval.json"), &value)?;
    emit(&serde_json::to_string(&value)?)?;
    Ok(())
}
