//! Adaptive branching agent.
//!
//! One branch per region slot `[center, N, E, S, W]`. Branches whose slot is
//! fictitious are idle: they are skipped when acting, averaging targets and
//! computing the loss. All regions share one agent (parameters and replay
//! memory).

mod replay;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Phase, RoadNetwork};
use crate::neural::{argmax, soft_update, Adam, BranchingNet, Checkpoint, NetShape, NeuralError, Sample};
use crate::partition::{Region, SLOTS};
use crate::sim::SimState;

pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("transition {0} has no activated branch")]
    AllIdle(usize),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("region member `{0}` is not in the simulated network")]
    UnknownMember(String),
}

/// Linear decay from `max` to `min` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub max: f64,
    pub min: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            max: 1.0,
            min: 0.001,
            decay_steps: 20_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 {
            return self.min;
        }
        let frac = step.min(self.decay_steps) as f64 / self.decay_steps as f64;
        self.max * (1.0 - frac) + self.min * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub epsilon: EpsilonSchedule,
    /// Transitions stored before the first learning step.
    pub warmup: usize,
    pub trunk: Vec<usize>,
    pub value_hidden: usize,
    pub advantage_hidden: usize,
    pub seed: u64,
    /// Pick next actions with the online net and evaluate them with the
    /// target net; otherwise the target net does both.
    pub double: bool,
    /// Average targets and loss over activated branches only (ABDQ);
    /// `false` treats every branch as activated (BDQ).
    pub masked: bool,
    /// Multiplies rewards as they enter the replay buffer.
    pub reward_scale: f64,
    /// Multiplies every observation entry before it reaches the network.
    pub obs_scale: f64,
    /// Gradient steps per decision step.
    pub updates_per_step: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            buffer_size: 200_000,
            batch_size: 32,
            tau: 0.001,
            epsilon: EpsilonSchedule::default(),
            warmup: 1000,
            trunk: vec![512, 256],
            value_hidden: 128,
            advantage_hidden: 128,
            seed: 0,
            double: true,
            masked: true,
            reward_scale: 1.0,
            obs_scale: 1.0,
            updates_per_step: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_owned()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.updates_per_step == 0 {
            return bad("updates per step must be at least 1");
        }
        if self.buffer_size == 0 || self.batch_size == 0 {
            return bad("buffer and batch sizes must be positive");
        }
        if self.batch_size > self.buffer_size {
            return bad("batch size exceeds the buffer size");
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward scale must be positive");
        }
        if !(self.obs_scale.is_finite() && self.obs_scale > 0.0) {
            return bad("observation scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.min) || !(0.0..=1.0).contains(&e.max) || e.min > e.max {
            return bad("epsilon bounds must satisfy 0 <= min <= max <= 1");
        }
        Ok(())
    }

    pub fn shape(&self, input: usize) -> NetShape {
        NetShape::with_hidden(input, &self.trunk, self.value_hidden, self.advantage_hidden)
    }
}

/// Width of one intersection's segment in a regional observation, with the
/// lane blocks padded to `lanes`.
pub fn intersection_dim(lanes: usize) -> usize {
    2 * lanes + Phase::COUNT
}

pub fn observation_dim(lanes: usize) -> usize {
    SLOTS * intersection_dim(lanes)
}

/// Lane width shared by every region of `net`, so that all regions feed the
/// same network.
pub fn lane_width(net: &RoadNetwork) -> usize {
    net.max_entering_lanes()
}

/// Concatenated `[waits | waves | one-hot phase]` of the five slots, lane
/// blocks zero-padded to `lanes`; fictitious slots are all zeros.
pub fn build_observation(sim: &SimState, region: &Region, lanes: usize) -> Result<Vec<f64>, AgentError> {
    let seg = intersection_dim(lanes);
    let mut obs = vec![0.0; SLOTS * seg];
    for (slot, member) in region.slots.iter().enumerate() {
        let Some(id) = member else { continue };
        let v = sim
            .net()
            .index_of(id)
            .map_err(|_| AgentError::UnknownMember(id.to_string()))?;
        let own = sim.net().entering_lanes(v);
        if own.len() > lanes {
            return Err(AgentError::InvalidConfig(format!(
                "`{id}` has {} entering lanes, observation width is {lanes}",
                own.len()
            )));
        }
        let out = &mut obs[slot * seg..(slot + 1) * seg];
        for (i, &l) in own.iter().enumerate() {
            out[i] = sim.wait(l) as f64;
            out[lanes + i] = sim.wave(l) as f64;
        }
        out[2 * lanes + sim.phase(v).index()] = 1.0;
    }
    Ok(obs)
}

/// R_i: sum of the member rewards; fictitious slots add nothing.
pub fn regional_reward(sim: &SimState, region: &Region) -> Result<f64, AgentError> {
    let mut total = 0.0;
    for id in region.members() {
        let v = sim
            .net()
            .index_of(id)
            .map_err(|_| AgentError::UnknownMember(id.to_string()))?;
        total += sim.reward_at(v);
    }
    Ok(total)
}

/// ε-greedy joint action. Idle branches always get action 0.
pub fn select_joint_action(
    net: &BranchingNet,
    obs: &[f64],
    mask: &[bool; SLOTS],
    eps: f64,
    rng: &mut impl Rng,
) -> Result<[usize; SLOTS], AgentError> {
    let actions = net.shape().actions;
    let mut out = [0; SLOTS];
    if eps > 0.0 && rng.random::<f64>() < eps {
        for k in 0..SLOTS {
            if mask[k] {
                out[k] = rng.random_range(0..actions);
            }
        }
        return Ok(out);
    }
    let q = net.forward(obs)?;
    for k in 0..SLOTS {
        if mask[k] {
            out[k] = q.argmax(k);
        }
    }
    Ok(out)
}

/// Branches that enter the target average and the loss.
pub fn active_branches(mask: &[bool; SLOTS], masked: bool) -> [bool; SLOTS] {
    if masked {
        *mask
    } else {
        [true; SLOTS]
    }
}

/// `y = R + gamma * mean over activated k of Q-_k(o', argmax_a Q_k(o', a))`,
/// one scalar per transition. With `double` the argmax comes from
/// `online`, otherwise from `target`.
pub fn compute_targets(
    target: &BranchingNet,
    online: &BranchingNet,
    batch: &[&Transition],
    gamma: f64,
    double: bool,
    masked: bool,
) -> Result<Vec<f64>, AgentError> {
    let mut ys = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let active = active_branches(&t.mask, masked);
        let n = active.iter().filter(|a| **a).count();
        if n == 0 {
            return Err(AgentError::AllIdle(i));
        }
        if gamma == 0.0 {
            ys.push(t.reward);
            continue;
        }
        let next: Vec<f64> = t.next_obs.iter().map(|&x| f64::from(x)).collect();
        let qt = target.forward(&next)?;
        let qo = if double { Some(online.forward(&next)?) } else { None };
        let mut sum = 0.0;
        for k in (0..SLOTS).filter(|&k| active[k]) {
            let a = match &qo {
                Some(q) => q.argmax(k),
                None => qt.argmax(k),
            };
            sum += qt.q_branch(k)[a];
        }
        ys.push(t.reward + gamma * sum / n as f64);
    }
    Ok(ys)
}

/// Loss and gradients of the batch against the given scalar targets.
pub fn batch_loss_and_gradients(
    online: &BranchingNet,
    batch: &[&Transition],
    ys: &[f64],
    masked: bool,
) -> Result<(f64, Vec<f64>), AgentError> {
    let obs: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| t.obs.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let targets: Vec<[f64; SLOTS]> = ys.iter().map(|&y| [y; SLOTS]).collect();
    let masks: Vec<[bool; SLOTS]> = batch.iter().map(|t| active_branches(&t.mask, masked)).collect();
    let samples: Vec<Sample> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| Sample {
            obs: &obs[i],
            actions: &t.actions,
            targets: &targets[i],
            mask: &masks[i],
        })
        .collect();
    Ok(online.loss_and_gradients(&samples)?)
}

/// Shared learner: online and target networks, Adam state, replay memory.
#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    online: BranchingNet,
    target: BranchingNet,
    adam: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    /// Decisions taken, drives ε.
    steps: u64,
    learn_steps: u64,
}

impl Agent {
    pub fn new(cfg: AgentConfig, input: usize) -> Result<Self, AgentError> {
        cfg.validate()?;
        let online = BranchingNet::new(cfg.shape(input), cfg.seed)?;
        let target = online.clone();
        let adam = Adam::new(online.len());
        let buffer = ReplayBuffer::new(cfg.buffer_size, cfg.seed.wrapping_add(1));
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        Ok(Self {
            cfg,
            online,
            target,
            adam,
            buffer,
            rng,
            steps: 0,
            learn_steps: 0,
        })
    }

    /// Greedy-only agent from saved parameters.
    pub fn from_checkpoint(cfg: AgentConfig, ckpt: Checkpoint) -> Result<Self, AgentError> {
        cfg.validate()?;
        let buffer = ReplayBuffer::new(cfg.buffer_size, cfg.seed.wrapping_add(1));
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        Ok(Self {
            cfg,
            online: ckpt.online,
            target: ckpt.target,
            adam: ckpt.adam,
            buffer,
            rng,
            steps: 0,
            learn_steps: 0,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            online: self.online.clone(),
            target: self.target.clone(),
            adam: self.adam.clone(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &BranchingNet {
        &self.online
    }

    pub fn target(&self) -> &BranchingNet {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon.value(self.steps)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    /// Exploring action at the current ε.
    pub fn act(&mut self, obs: &[f64], mask: &[bool; SLOTS]) -> Result<[usize; SLOTS], AgentError> {
        let eps = self.epsilon();
        let obs = self.scaled(obs);
        select_joint_action(&self.online, &obs, mask, eps, &mut self.rng)
    }

    pub fn act_greedy(&self, obs: &[f64], mask: &[bool; SLOTS]) -> Result<[usize; SLOTS], AgentError> {
        let q = self.online.forward(&self.scaled(obs))?;
        let mut out = [0; SLOTS];
        for k in (0..SLOTS).filter(|&k| mask[k]) {
            out[k] = argmax(q.q_branch(k));
        }
        Ok(out)
    }

    /// Advance the ε clock by one decision step.
    pub fn tick(&mut self) {
        self.steps += 1;
    }

    fn scaled(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter().map(|x| x * self.cfg.obs_scale).collect()
    }

    /// Store a transition given in raw units; both scales are applied here.
    pub fn remember(&mut self, mut t: Transition) {
        t.reward *= self.cfg.reward_scale;
        if self.cfg.obs_scale != 1.0 {
            let s = self.cfg.obs_scale as f32;
            t.obs.iter_mut().chain(t.next_obs.iter_mut()).for_each(|x| *x *= s);
        }
        self.buffer.push(t);
    }

    /// One gradient step on a sampled batch followed by a soft target
    /// update. Returns `None` (and changes nothing) during warmup.
    pub fn learn(&mut self) -> Result<Option<f64>, AgentError> {
        if self.buffer.len() < self.cfg.warmup.max(self.cfg.batch_size) {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size);
        let ys = compute_targets(&self.target, &self.online, &batch, self.cfg.gamma, self.cfg.double, self.cfg.masked)?;
        let (loss, grad) = batch_loss_and_gradients(&self.online, &batch, &ys, self.cfg.masked)?;
        self.adam.step(self.online.params_mut(), &grad, self.cfg.lr)?;
        soft_update(&mut self.target, &self.online, self.cfg.tau)?;
        self.learn_steps += 1;
        Ok(Some(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{make_cross, make_grid, Movement, Side};
    use crate::partition::{construct_regions, AssignmentOrder, DominatingSet};
    use crate::sim::{FlowSpec, SimConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny_cfg() -> AgentConfig {
        AgentConfig {
            trunk: vec![16, 12],
            value_hidden: 8,
            advantage_hidden: 8,
            ..AgentConfig::default()
        }
    }

    fn transition(rng: &mut ChaCha8Rng, dim: usize, mask: [bool; SLOTS]) -> Transition {
        let obs = (0..dim).map(|_| rng.random_range(0..5) as f32).collect();
        let next_obs = (0..dim).map(|_| rng.random_range(0..5) as f32).collect();
        let mut actions = [0; SLOTS];
        for k in 0..SLOTS {
            if mask[k] {
                actions[k] = rng.random_range(0..4);
            }
        }
        Transition {
            obs,
            actions,
            reward: -rng.random_range(0.0..10.0),
            next_obs,
            mask,
        }
    }

    #[test]
    fn epsilon_endpoints() {
        let e = EpsilonSchedule::default();
        assert_eq!(e.value(0), 1.0);
        assert_eq!(e.value(20_000), 0.001);
        assert_eq!(e.value(1_000_000), 0.001);
        assert!((e.value(10_000) - 0.5005).abs() < 1e-12);
    }

    #[test]
    fn observation_of_partial_region() {
        let net = make_grid(1, 3, 300.0, 300.0, 3).unwrap();
        let set = DominatingSet::from_labels(["1-2"]);
        let config = construct_regions(&net, &set, &AssignmentOrder::canonical(&net, &set).unwrap()).unwrap();
        let region = &config.regions[0];
        assert_eq!(region.mask, [true, false, true, false, true]);
        let sim = SimState::reset(&net, &FlowSpec::empty(), &SimConfig::default()).unwrap();
        let width = lane_width(&net);
        let obs = build_observation(&sim, region, width).unwrap();
        let seg = intersection_dim(width);
        assert_eq!(obs.len(), 5 * seg);
        for slot in [1, 3] {
            assert!(obs[slot * seg..(slot + 1) * seg].iter().all(|x| *x == 0.0));
        }
        for slot in [0, 2, 4] {
            let part = &obs[slot * seg..(slot + 1) * seg];
            assert_eq!(part[..2 * width].iter().sum::<f64>(), 0.0);
            assert_eq!(&part[2 * width..], &[1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn slot_order_matters() {
        let net = make_cross(300.0, 1).unwrap();
        let set = DominatingSet::from_labels(["2-2"]);
        let config = construct_regions(&net, &set, &AssignmentOrder::canonical(&net, &set).unwrap()).unwrap();
        let mut sim = SimState::reset(&net, &FlowSpec::empty(), &SimConfig::default()).unwrap();
        let north = net.index_of(&"1-2".into()).unwrap();
        let lane = net.approach(net.incoming(north, Side::N).unwrap()).lanes[0];
        sim.place_vehicle(lane, Movement::Straight, true).unwrap();
        let region = config.regions[0].clone();
        let obs = build_observation(&sim, &region, lane_width(&net)).unwrap();
        let mut swapped = region.clone();
        swapped.slots.swap(1, 3);
        let other = build_observation(&sim, &swapped, lane_width(&net)).unwrap();
        assert_ne!(obs, other);
    }

    #[test]
    fn regional_reward_is_local_sum() {
        let net = make_grid(1, 3, 300.0, 300.0, 1).unwrap();
        let set = DominatingSet::from_labels(["1-2"]);
        let config = construct_regions(&net, &set, &AssignmentOrder::canonical(&net, &set).unwrap()).unwrap();
        let mut sim = SimState::reset(&net, &FlowSpec::empty(), &SimConfig::default()).unwrap();
        assert_eq!(regional_reward(&sim, &config.regions[0]).unwrap(), 0.0);
        let put = |sim: &mut SimState, v: usize, side: Side, n: usize| {
            let lane = net.approach(net.incoming(v, side).unwrap()).lanes[0];
            for _ in 0..n {
                sim.place_vehicle(lane, Movement::Straight, true).unwrap();
            }
        };
        put(&mut sim, 0, Side::N, 6);
        put(&mut sim, 2, Side::S, 3);
        assert_eq!(regional_reward(&sim, &config.regions[0]).unwrap(), -9.0);
    }

    #[test]
    fn greedy_tie_break_and_exploration_frequency() {
        let cfg = tiny_cfg();
        let mut net = BranchingNet::new(cfg.shape(4), 0).unwrap();
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        // Zero weights: Q equals the output biases of each head.
        let range = net.head_range(0);
        let bias = range.end - 4;
        net.params_mut()[bias..range.end].copy_from_slice(&[1.0, 5.0, 5.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = [true, true, false, true, true];
        let a = select_joint_action(&net, &[0.0; 4], &mask, 0.0, &mut rng).unwrap();
        assert_eq!(a[0], 1);
        assert_eq!(a[2], 0);

        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let a = select_joint_action(&net, &[0.0; 4], &mask, 1.0, &mut rng).unwrap();
            counts[a[3]] += 1;
            assert_eq!(a[2], 0);
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn target_examples() {
        let cfg = tiny_cfg();
        let dim = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = transition(&mut rng, dim, [true, false, false, true, false]);
        let net = BranchingNet::new(cfg.shape(dim), 1).unwrap();
        let y = compute_targets(&net, &net, &[&t], 0.0, true, true).unwrap();
        assert_eq!(y, vec![t.reward]);

        // One activated branch whose target-net value at the online argmax
        // is 10: zero weights, V = 10, flat advantages.
        let mut target = net.clone();
        target.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let n = target.len();
        let value_bias = target.head_range(0).start - 1;
        target.params_mut()[value_bias] = 10.0;
        assert_eq!(target.forward(&vec![0.0; dim]).unwrap().v, 10.0);
        assert!(n > value_bias);
        let mut one = t.clone();
        one.reward = 0.0;
        one.mask = [true, false, false, false, false];
        let y = compute_targets(&target, &net, &[&one], 0.9, true, true).unwrap();
        assert!((y[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn double_estimation_uses_online_argmax() {
        let cfg = tiny_cfg();
        let dim = 3;
        let zero = |seed| {
            let mut n = BranchingNet::new(cfg.shape(dim), seed).unwrap();
            n.params_mut().iter_mut().for_each(|p| *p = 0.0);
            n
        };
        let set_head = |n: &mut BranchingNet, adv: [f64; 4]| {
            let end = n.head_range(0).end;
            n.params_mut()[end - 4..end].copy_from_slice(&adv);
        };
        let mut online = zero(0);
        set_head(&mut online, [0.0, 0.0, 1.0, 0.0]);
        let mut target = zero(1);
        set_head(&mut target, [4.0, 0.0, 0.0, 0.0]);
        let t = Transition {
            obs: vec![0.0; dim],
            actions: [0; SLOTS],
            reward: 0.0,
            next_obs: vec![0.0; dim],
            mask: [true, false, false, false, false],
        };
        // Target Q_0 = [3, -1, -1, -1]: online picks action 2 (-1), plain
        // target-net max picks action 0 (3).
        let double = compute_targets(&target, &online, &[&t], 1.0, true, true).unwrap();
        let plain = compute_targets(&target, &online, &[&t], 1.0, false, true).unwrap();
        assert_eq!(double, vec![-1.0]);
        assert_eq!(plain, vec![3.0]);
    }

    #[test]
    fn learning_waits_for_warmup() {
        let cfg = AgentConfig {
            warmup: 10,
            batch_size: 4,
            ..tiny_cfg()
        };
        let mut agent = Agent::new(cfg, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let before = agent.online().clone();
        for _ in 0..9 {
            agent.remember(transition(&mut rng, 6, [true; SLOTS]));
            assert_eq!(agent.learn().unwrap(), None);
        }
        assert_eq!(agent.online(), &before);
        agent.remember(transition(&mut rng, 6, [true; SLOTS]));
        assert!(agent.learn().unwrap().is_some());
        assert_ne!(agent.online(), &before);
        assert_eq!(agent.learn_steps(), 1);
    }

    #[test]
    fn scales_apply_to_stored_transitions_and_actions() {
        let cfg = AgentConfig {
            reward_scale: 0.5,
            obs_scale: 0.25,
            ..tiny_cfg()
        };
        let mut agent = Agent::new(cfg.clone(), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = transition(&mut rng, 6, [true; SLOTS]);
        agent.remember(t.clone());
        let stored = agent.buffer().get(0).unwrap();
        assert_eq!(stored.reward, 0.5 * t.reward);
        let quarter = |v: &[f32]| v.iter().map(|x| x * 0.25).collect::<Vec<f32>>();
        assert_eq!(stored.obs, quarter(&t.obs));
        assert_eq!(stored.next_obs, quarter(&t.next_obs));

        let raw = Agent::new(AgentConfig { obs_scale: 1.0, ..cfg }, 6).unwrap();
        for _ in 0..20 {
            let obs: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..20.0)).collect();
            let small: Vec<f64> = obs.iter().map(|x| x * 0.25).collect();
            let mask = [true, true, false, true, true];
            assert_eq!(agent.act_greedy(&obs, &mask).unwrap(), raw.act_greedy(&small, &mask).unwrap());
        }
    }

    #[test]
    fn scale_and_update_count_are_validated() {
        for bad in [
            AgentConfig { reward_scale: 0.0, ..tiny_cfg() },
            AgentConfig { reward_scale: f64::NAN, ..tiny_cfg() },
            AgentConfig { obs_scale: -1.0, ..tiny_cfg() },
            AgentConfig { obs_scale: f64::INFINITY, ..tiny_cfg() },
            AgentConfig { updates_per_step: 0, ..tiny_cfg() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(AgentConfig { updates_per_step: 4, ..tiny_cfg() }.validate().is_ok());
    }

    #[test]
    fn fixed_transition_loss_decreases() {
        let cfg = AgentConfig {
            warmup: 1,
            batch_size: 1,
            gamma: 0.0,
            lr: 1e-3,
            ..tiny_cfg()
        };
        let mut agent = Agent::new(cfg, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        agent.remember(transition(&mut rng, 6, [true, true, false, true, false]));
        let losses: Vec<f64> = (0..105).map(|_| agent.learn().unwrap().unwrap()).collect();
        let tail = &losses[5..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "{tail:?}");
        assert!(tail[tail.len() - 1] < 0.5 * tail[0]);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = AgentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<AgentConfig>(&text).unwrap(), cfg);
        let partial: AgentConfig = serde_json::from_str(r#"{"gamma": 0.9, "masked": false}"#).unwrap();
        assert_eq!(partial.gamma, 0.9);
        assert!(!partial.masked);
        assert_eq!(partial.batch_size, 32);
        let bad = AgentConfig {
            gamma: 1.5,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        /// Changing what an idle branch stored, or how its head is
        /// parameterized, moves neither targets, loss nor gradients.
        #[test]
        fn idle_branch_independence(seed in any::<u64>(), idle in 0usize..5, act in 0usize..4) {
            let cfg = tiny_cfg();
            let dim = 5;
            let online = BranchingNet::new(cfg.shape(dim), seed).unwrap();
            let target = BranchingNet::new(cfg.shape(dim), seed ^ 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mask = [true; SLOTS];
            mask[idle] = false;
            let batch: Vec<Transition> = (0..4).map(|_| transition(&mut rng, dim, mask)).collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            let ys = compute_targets(&target, &online, &refs, 0.9, true, true).unwrap();
            let (loss, grad) = batch_loss_and_gradients(&online, &refs, &ys, true).unwrap();

            let mut changed = batch.clone();
            for t in &mut changed {
                t.actions[idle] = act;
            }
            let mut online2 = online.clone();
            let mut target2 = target.clone();
            for n in [&mut online2, &mut target2] {
                let r = n.head_range(idle);
                for p in &mut n.params_mut()[r] {
                    *p += 0.37;
                }
            }
            let refs2: Vec<&Transition> = changed.iter().collect();
            let ys2 = compute_targets(&target2, &online2, &refs2, 0.9, true, true).unwrap();
            let (loss2, grad2) = batch_loss_and_gradients(&online2, &refs2, &ys2, true).unwrap();
            prop_assert_eq!(&ys, &ys2);
            prop_assert_eq!(loss, loss2);
            let r = online.head_range(idle);
            for i in 0..grad.len() {
                if !r.contains(&i) {
                    prop_assert_eq!(grad[i], grad2[i]);
                }
            }
        }
    }
}
