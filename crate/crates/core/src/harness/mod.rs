//! Training and evaluation pipeline.
//!
//! Every control step: build one observation per region, pick joint actions
//! with the shared agent, concatenate them into a phase for every
//! intersection, advance the simulator, store one transition per region (in
//! region order) and take one learning step.

mod controllers;
mod metrics;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{build_observation, lane_width, observation_dim, regional_reward, Agent, AgentConfig, AgentError, Transition};
use crate::net::{make_cross, make_grid, IntersectionId, NetError, Phase, RoadNetFile, RoadNetwork};
use crate::neural::{load_checkpoint, save_checkpoint, NeuralError};
use crate::partition::{
    construct_regions, solve_min_dominating_set, validate_configuration, AssignmentOrder, DominatingSet,
    PartitionError, RegionConfiguration, SLOTS,
};
use crate::sim::{FlowSpec, SimConfig, SimError, SimState};

pub use controllers::{Controller, FixedTime, Greedy, MaxPressure, RandomPhases};
pub use metrics::{emit_metrics, episode_reward, read_metrics, EpisodeRecord, MeanStd};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("partition: {0}")]
    Partition(#[from] PartitionError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("agent: {0}")]
    Agent(#[from] AgentError),
    #[error("checkpoint: {0}")]
    Neural(#[from] NeuralError),
    #[error("invalid controller: {0}")]
    InvalidController(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    Grid {
        rows: usize,
        cols: usize,
        ns_length: f64,
        ew_length: f64,
        lanes: usize,
    },
    Cross {
        arm_length: f64,
        lanes: usize,
    },
    File {
        path: PathBuf,
    },
    Inline {
        roadnet: RoadNetFile,
    },
}

impl NetworkSpec {
    pub fn build(&self) -> Result<RoadNetwork, NetError> {
        match self {
            NetworkSpec::Grid {
                rows,
                cols,
                ns_length,
                ew_length,
                lanes,
            } => make_grid(*rows, *cols, *ns_length, *ew_length, *lanes),
            NetworkSpec::Cross { arm_length, lanes } => make_cross(*arm_length, *lanes),
            NetworkSpec::File { path } => RoadNetwork::load(path),
            NetworkSpec::Inline { roadnet } => RoadNetwork::from_file(roadnet),
        }
    }
}

/// A flow given inline or as a path to a flow file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowRef {
    Path(PathBuf),
    Inline(FlowSpec),
}

impl FlowRef {
    pub fn load(&self) -> Result<FlowSpec, SimError> {
        match self {
            FlowRef::Path(p) => FlowSpec::load(p),
            FlowRef::Inline(f) => Ok(f.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PartitionSpec {
    /// Certified minimum dominating set.
    Solve,
    Centers { centers: Vec<IntersectionId> },
    Configuration { configuration: RegionConfiguration },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub flow: FlowRef,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "default_partition")]
    pub partition: PartitionSpec,
    /// Seed of the leaf-assignment order; canonical order when absent.
    #[serde(default)]
    pub assignment_seed: Option<u64>,
    #[serde(default)]
    pub agent: AgentConfig,
    pub episodes: usize,
    /// Greedy evaluation episode every this many training episodes (0: never).
    #[serde(default)]
    pub eval_every: usize,
    /// Parameter checkpoint every this many episodes (0: final only).
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub record_step_rewards: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_partition() -> PartitionSpec {
    PartitionSpec::Solve
}

impl ExperimentConfig {
    pub fn new(network: NetworkSpec, flow: FlowSpec, episodes: usize) -> Self {
        Self {
            network,
            flow: FlowRef::Inline(flow),
            sim: SimConfig::default(),
            partition: PartitionSpec::Solve,
            assignment_seed: None,
            agent: AgentConfig::default(),
            episodes,
            eval_every: 0,
            checkpoint_every: 0,
            record_step_rewards: false,
            output: None,
            seed: 0,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.display().to_string(),
            source,
        })?;
        // Relative paths inside the config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        if let NetworkSpec::File { path } = &mut cfg.network {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let FlowRef::Path(p) = &mut cfg.flow {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Simulator config of training episode `e`.
    pub fn episode_sim(&self, e: usize) -> SimConfig {
        SimConfig {
            seed: mix(self.seed, e as u64),
            ..self.sim.clone()
        }
    }

    /// Agent config with its seed tied to the global seed.
    pub fn resolved_agent(&self) -> AgentConfig {
        AgentConfig {
            seed: mix(self.seed ^ 0xa5a5_a5a5, self.agent.seed),
            ..self.agent.clone()
        }
    }
}

/// SplitMix64 finalizer over a pair: decorrelates derived seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(b.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds of the evaluation episodes, disjoint from the training stream.
pub fn eval_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| mix(seed ^ 0x5eed_e7a1, i as u64)).collect()
}

/// Network plus region configuration built from a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub net: RoadNetwork,
    pub flow: FlowSpec,
    pub regions: RegionConfiguration,
    pub lanes: usize,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup, HarnessError> {
    let net = cfg.network.build()?;
    let flow = cfg.flow.load()?;
    flow.validate(&net)?;
    cfg.sim.validate()?;
    let regions = match &cfg.partition {
        PartitionSpec::Configuration { configuration } => configuration.clone(),
        other => {
            let centers = match other {
                PartitionSpec::Centers { centers } => DominatingSet::new(centers.iter().cloned()),
                _ => solve_min_dominating_set(&net)?,
            };
            let order = match cfg.assignment_seed {
                Some(seed) => AssignmentOrder::shuffled(&net, &centers, seed)?,
                None => AssignmentOrder::canonical(&net, &centers)?,
            };
            construct_regions(&net, &centers, &order)?
        }
    };
    let violations = validate_configuration(&net, &regions);
    if !violations.is_empty() {
        return Err(PartitionError::InvalidConfiguration(violations).into());
    }
    let lanes = lane_width(&net);
    Ok(Setup {
        net,
        flow,
        regions,
        lanes,
    })
}

/// Phase of every intersection from the regional joint actions; each real
/// slot sets the phase of its member.
pub fn assemble_phases(
    net: &RoadNetwork,
    regions: &RegionConfiguration,
    joint: &[[usize; SLOTS]],
) -> Result<Vec<Phase>, HarnessError> {
    let mut phases: Vec<Option<Phase>> = vec![None; net.len()];
    for (region, actions) in regions.regions.iter().zip(joint) {
        for (slot, member) in region.slots.iter().enumerate() {
            let Some(id) = member else { continue };
            let v = net.index_of(id)?;
            let p = Phase::from_index(actions[slot])
                .ok_or_else(|| HarnessError::InvalidController(format!("action {} is not a phase", actions[slot])))?;
            if phases[v].replace(p).is_some() {
                return Err(HarnessError::InvalidConfig(format!("`{id}` belongs to two regions")));
            }
        }
    }
    phases
        .into_iter()
        .enumerate()
        .map(|(v, p)| p.ok_or_else(|| HarnessError::InvalidConfig(format!("`{}` is in no region", net.id(v)))))
        .collect()
}

/// Result of one full episode under a fixed controller.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub reward: f64,
    pub att: Option<f64>,
    pub aql: f64,
    pub tp: usize,
    pub step_rewards: Vec<Vec<f64>>,
}

pub fn run_episode(
    net: &RoadNetwork,
    flow: &FlowSpec,
    sim_cfg: &SimConfig,
    controller: &mut dyn Controller,
) -> Result<EpisodeOutcome, HarnessError> {
    let mut sim = SimState::reset(net, flow, sim_cfg)?;
    controller.reset(sim_cfg.seed);
    let mut steps = Vec::with_capacity(sim_cfg.steps_per_episode());
    while !sim.is_done() {
        let phases = controller.phases(&sim)?;
        steps.push(sim.step(&phases)?);
    }
    let m = sim.metrics();
    Ok(EpisodeOutcome {
        reward: episode_reward(&steps, net.len()),
        att: m.att,
        aql: m.aql,
        tp: m.tp,
        step_rewards: steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub controller: String,
    pub episodes: usize,
    pub reward: MeanStd,
    /// Over episodes with at least one completed trip.
    pub att: Option<MeanStd>,
    pub aql: MeanStd,
    pub tp: MeanStd,
}

/// Run one episode per seed and aggregate.
pub fn evaluate(
    controller: &mut dyn Controller,
    net: &RoadNetwork,
    flow: &FlowSpec,
    sim: &SimConfig,
    seeds: &[u64],
) -> Result<EvalSummary, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut outcomes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = SimConfig { seed, ..sim.clone() };
        outcomes.push(run_episode(net, flow, &cfg, controller)?);
    }
    let pick = |f: fn(&EpisodeOutcome) -> f64| -> MeanStd {
        MeanStd::of(&outcomes.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
    };
    let atts: Vec<f64> = outcomes.iter().filter_map(|o| o.att).collect();
    Ok(EvalSummary {
        controller: controller.name().to_owned(),
        episodes: seeds.len(),
        reward: pick(|o| o.reward),
        att: MeanStd::of(&atts),
        aql: pick(|o| o.aql),
        tp: pick(|o| o.tp as f64),
    })
}

/// Everything a training run produces.
pub struct TrainOutcome {
    pub setup: Setup,
    pub agent: Agent,
    pub records: Vec<EpisodeRecord>,
    pub evals: Vec<(usize, EpisodeOutcome)>,
}

/// Files written by [`train`] into its output directory.
pub const CONFIG_FILE: &str = "config.json";
pub const REGIONS_FILE: &str = "regions.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const EVAL_FILE: &str = "eval.jsonl";

pub fn checkpoint_name(episode: usize) -> String {
    format!("checkpoint_{episode:05}.bin")
}

struct Logs {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    eval: BufWriter<File>,
    dir: PathBuf,
}

impl Logs {
    fn open(dir: &Path) -> Result<Self, HarnessError> {
        let create = |name: &str| {
            let p = dir.join(name);
            File::create(&p).map(BufWriter::new).map_err(|e| HarnessError::io(&p, e))
        };
        Ok(Self {
            metrics: create(METRICS_FILE)?,
            timing: create(TIMING_FILE)?,
            eval: create(EVAL_FILE)?,
            dir: dir.to_owned(),
        })
    }

    fn flush(&mut self) -> Result<(), HarnessError> {
        for (w, name) in [
            (&mut self.metrics, METRICS_FILE),
            (&mut self.timing, TIMING_FILE),
            (&mut self.eval, EVAL_FILE),
        ] {
            w.flush().map_err(|e| HarnessError::io(&self.dir.join(name), e))?;
        }
        Ok(())
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("config types serialize");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

/// Algorithm pipeline: partition, then `cfg.episodes` training episodes.
/// With `out` set, writes the resolved config, regions, per-episode metrics,
/// timings, evaluation lines and checkpoints there.
pub fn train(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TrainOutcome, HarnessError> {
    let setup = setup(cfg)?;
    let agent_cfg = cfg.resolved_agent();
    let mut agent = Agent::new(agent_cfg, observation_dim(setup.lanes))?;
    let mut logs = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            write_json(&dir.join(CONFIG_FILE), cfg)?;
            write_json(&dir.join(REGIONS_FILE), &setup.regions)?;
            Some(Logs::open(dir)?)
        }
        None => None,
    };
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut evals = Vec::new();
    for e in 0..cfg.episodes {
        let started = Instant::now();
        let record = train_episode(cfg, &setup, &mut agent, e)?;
        if let Some(logs) = &mut logs {
            metrics::append_record(&mut logs.metrics, &record).map_err(|err| HarnessError::io(&logs.dir, err))?;
            let timing = serde_json::json!({"episode": e, "wall_time_s": started.elapsed().as_secs_f64()});
            writeln!(logs.timing, "{timing}").map_err(|err| HarnessError::io(&logs.dir, err))?;
        }
        records.push(record);
        if cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 {
            let mut greedy = Greedy::new(&agent, &setup.regions, setup.lanes);
            let sim = SimConfig {
                seed: eval_seeds(cfg.seed, 1)[0],
                ..cfg.sim.clone()
            };
            let outcome = run_episode(&setup.net, &setup.flow, &sim, &mut greedy)?;
            if let Some(logs) = &mut logs {
                let line = serde_json::json!({
                    "episode": e,
                    "reward": outcome.reward,
                    "att": outcome.att,
                    "aql": outcome.aql,
                    "tp": outcome.tp,
                });
                writeln!(logs.eval, "{line}").map_err(|err| HarnessError::io(&logs.dir, err))?;
            }
            evals.push((e, outcome));
        }
        let last = e + 1 == cfg.episodes;
        if let Some(dir) = out {
            if last || (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
                save_checkpoint(dir.join(checkpoint_name(e + 1)), &agent.checkpoint())?;
            }
        }
    }
    if let Some(logs) = &mut logs {
        logs.flush()?;
    }
    Ok(TrainOutcome {
        setup,
        agent,
        records,
        evals,
    })
}

fn train_episode(cfg: &ExperimentConfig, setup: &Setup, agent: &mut Agent, e: usize) -> Result<EpisodeRecord, HarnessError> {
    let mut sim = SimState::reset(&setup.net, &setup.flow, &cfg.episode_sim(e))?;
    let regions = &setup.regions.regions;
    let mut obs: Vec<Vec<f64>> = regions
        .iter()
        .map(|r| build_observation(&sim, r, setup.lanes))
        .collect::<Result<_, _>>()?;
    let mut steps = Vec::with_capacity(cfg.sim.steps_per_episode());
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    while !sim.is_done() {
        let joint = regions
            .iter()
            .zip(&obs)
            .map(|(r, o)| agent.act(o, &r.mask))
            .collect::<Result<Vec<_>, _>>()?;
        agent.tick();
        let phases = assemble_phases(&setup.net, &setup.regions, &joint)?;
        steps.push(sim.step(&phases)?);
        for (i, region) in regions.iter().enumerate() {
            let next = build_observation(&sim, region, setup.lanes)?;
            let reward = regional_reward(&sim, region)?;
            agent.remember(Transition::new(&obs[i], joint[i], reward, &next, region.mask));
            obs[i] = next;
        }
        for _ in 0..agent.config().updates_per_step {
            if let Some(loss) = agent.learn()? {
                loss_sum += loss;
                loss_n += 1;
            }
        }
    }
    let m = sim.metrics();
    Ok(EpisodeRecord {
        episode: e,
        reward: episode_reward(&steps, setup.net.len()),
        att: m.att,
        aql: m.aql,
        tp: m.tp,
        epsilon: agent.epsilon(),
        loss: (loss_n > 0).then(|| loss_sum / loss_n as f64),
        step_rewards: cfg.record_step_rewards.then_some(steps),
    })
}

/// Agent restored from a checkpoint for greedy evaluation under `cfg`.
pub fn load_agent(cfg: &ExperimentConfig, setup: &Setup, checkpoint: impl AsRef<Path>) -> Result<Agent, HarnessError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let expected = observation_dim(setup.lanes);
    if ckpt.online.shape().input != expected {
        return Err(NeuralError::DimensionMismatch {
            expected,
            got: ckpt.online.shape().input,
        }
        .into());
    }
    Ok(Agent::from_checkpoint(cfg.resolved_agent(), ckpt)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(episodes: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            NetworkSpec::Cross {
                arm_length: 200.0,
                lanes: 1,
            },
            FlowSpec::gaussian(0.3, 0.3),
            episodes,
        );
        cfg.sim.episode_length = 300;
        cfg.agent = AgentConfig {
            trunk: vec![16, 16],
            value_hidden: 8,
            advantage_hidden: 8,
            warmup: 8,
            batch_size: 8,
            ..AgentConfig::default()
        };
        cfg.record_step_rewards = true;
        cfg
    }

    #[test]
    fn zero_episodes_writes_partition_and_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&quick(0), Some(dir.path())).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(fs::read(dir.path().join(METRICS_FILE)).unwrap().len(), 0);
        let regions: RegionConfiguration =
            serde_json::from_str(&fs::read_to_string(dir.path().join(REGIONS_FILE)).unwrap()).unwrap();
        assert_eq!(regions, out.setup.regions);
        assert_eq!(out.agent.learn_steps(), 0);
    }

    #[test]
    fn logged_reward_matches_step_rewards() {
        let out = train(&quick(2), None).unwrap();
        for r in &out.records {
            let steps = r.step_rewards.as_ref().unwrap();
            assert_eq!(steps.len(), 30);
            assert!((r.reward - episode_reward(steps, 5)).abs() <= 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = quick(2);
        cfg.checkpoint_every = 1;
        train(&cfg, Some(a.path())).unwrap();
        train(&cfg, Some(b.path())).unwrap();
        for name in [METRICS_FILE, REGIONS_FILE, CONFIG_FILE, "checkpoint_00001.bin", "checkpoint_00002.bin"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn phase_map_covers_every_intersection() {
        let cfg = quick(0);
        let s = setup(&cfg).unwrap();
        let joint = vec![[1, 2, 3, 0, 1]];
        let phases = assemble_phases(&s.net, &s.regions, &joint).unwrap();
        assert_eq!(phases.len(), 5);
        let region = &s.regions.regions[0];
        for (slot, id) in region.slots.iter().enumerate() {
            let v = s.net.index_of(id.as_ref().unwrap()).unwrap();
            assert_eq!(phases[v], Phase::from_index(joint[0][slot]).unwrap());
        }
    }

    #[test]
    fn zero_traffic_is_controller_independent() {
        let net = make_grid(2, 2, 200.0, 200.0, 1).unwrap();
        let sim = SimConfig {
            episode_length: 200,
            ..SimConfig::default()
        };
        let seeds = eval_seeds(0, 3);
        let mut fixed = FixedTime::default_cycle();
        let mut random = RandomPhases::new(0);
        let mut mp = MaxPressure;
        let mut results = Vec::new();
        for c in [&mut fixed as &mut dyn Controller, &mut random, &mut mp] {
            let s = evaluate(c, &net, &FlowSpec::empty(), &sim, &seeds).unwrap();
            assert!(s.att.is_none());
            assert_eq!(s.aql.mean, 0.0);
            results.push((s.reward, s.tp));
        }
        assert!(results.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn config_json_with_paths() {
        let dir = tempfile::tempdir().unwrap();
        let net = make_grid(1, 2, 100.0, 100.0, 1).unwrap();
        fs::write(dir.path().join("net.json"), serde_json::to_string(&net.to_file()).unwrap()).unwrap();
        fs::write(dir.path().join("flow.json"), r#"{"generator": {"mean": 0.1, "std": 0.1}}"#).unwrap();
        let text = r#"{
            "network": {"kind": "file", "path": "net.json"},
            "flow": "flow.json",
            "episodes": 1,
            "partition": {"source": "centers", "centers": ["1-1"]},
            "sim": {"episode_length": 100},
            "agent": {"trunk": [8, 8], "value_hidden": 4, "advantage_hidden": 4, "warmup": 4, "batch_size": 4}
        }"#;
        fs::write(dir.path().join("exp.json"), text).unwrap();
        let cfg = ExperimentConfig::load(dir.path().join("exp.json")).unwrap();
        let s = setup(&cfg).unwrap();
        assert_eq!(s.regions.len(), 1);
        assert_eq!(s.regions.regions[0].real_count(), 2);
        let out = train(&cfg, None).unwrap();
        assert_eq!(out.records.len(), 1);
    }
}
