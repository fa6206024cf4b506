//! Queue-based signalized traffic simulator.
//!
//! Vehicles are points. A vehicle entering a lane travels at free-flow speed
//! for the length of the link, then joins the lane's vertical FIFO queue.
//! Each tick the head of every queue may discharge (up to the saturation
//! rate) if the active phase permits its movement and the downstream lane
//! has room. Right turns are always permitted.
//!
//! A vehicle "waits" exactly when it sits in a queue.

mod flow;

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{IntersectionId, Movement, NetError, Phase, RoadNetwork, Side};

pub use flow::{FlowSource, FlowSpec, GeneratorSpec, ScheduledVehicle, TurnRatios, VehicleSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("`{0}` is not an entry arm of the network")]
    NotAnEntryArm(String),
    #[error("vehicles entering `{intersection}` from {side} have no feasible movement")]
    DeadEnd { intersection: IntersectionId, side: Side },
    #[error("expected a phase for each of the {expected} intersections, got {got}")]
    PhaseCount { expected: usize, got: usize },
    #[error("no phase given for intersection `{0}`")]
    MissingPhase(IntersectionId),
    #[error("the episode is over")]
    EpisodeOver,
    #[error("lane {0} is full")]
    LaneFull(usize),
    #[error("lane {lane} cannot serve {movement:?}")]
    MovementNotServed { lane: usize, movement: Movement },
    #[error("simulator invariant violated at t={time}: {detail}")]
    Invariant { time: u64, detail: String },
    #[error("cannot read flow {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse flow {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds per internal tick.
    pub tick: u32,
    /// Seconds between control decisions.
    pub action_interval: u32,
    pub episode_length: u32,
    /// Vehicles per tick per lane.
    pub saturation: u32,
    pub free_flow_speed: f64,
    /// Meters of road taken by a stored vehicle.
    pub spacing: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: 1,
            action_interval: 10,
            episode_length: 4000,
            saturation: 1,
            free_flow_speed: 11.0,
            spacing: 7.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_owned()));
        if self.tick == 0 || self.action_interval == 0 || self.episode_length == 0 {
            return bad("tick, action interval and episode length must be positive");
        }
        if self.action_interval % self.tick != 0 {
            return bad("action interval must be a multiple of the tick");
        }
        if self.episode_length % self.action_interval != 0 {
            return bad("episode length must be a multiple of the action interval");
        }
        if self.saturation == 0 {
            return bad("saturation must be at least one vehicle per tick");
        }
        if !(self.free_flow_speed.is_finite() && self.free_flow_speed > 0.0) {
            return bad("free-flow speed must be positive");
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return bad("vehicle spacing must be positive");
        }
        Ok(())
    }

    pub fn ticks_per_step(&self) -> u64 {
        u64::from(self.action_interval / self.tick)
    }

    /// Number of control steps in an episode.
    pub fn steps_per_episode(&self) -> usize {
        (self.episode_length / self.action_interval) as usize
    }
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: u32,
    pub depart: f64,
    /// Index into the network's entry arms; `None` for vehicles placed
    /// directly on a lane.
    pub origin: Option<usize>,
    /// (lane, tick) for every lane entered, in route order.
    pub entries: Vec<(usize, u64)>,
    pub arrival: Option<f64>,
    turn: Movement,
    next_turn: Option<Movement>,
    rng: ChaCha8Rng,
}

impl Vehicle {
    /// Movement the vehicle will make at the end of its current lane.
    pub fn turn(&self) -> Movement {
        self.turn
    }
}

#[derive(Debug, Clone)]
struct LaneState {
    queue: VecDeque<u32>,
    /// (vehicle, tick at which it reaches the queue), in entry order.
    in_flight: VecDeque<(u32, u64)>,
    capacity: usize,
    travel_ticks: u64,
}

impl LaneState {
    fn wave(&self) -> usize {
        self.queue.len() + self.in_flight.len()
    }

    fn has_space(&self) -> bool {
        self.wave() < self.capacity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean travel time of completed trips; absent until one completes.
    pub att: Option<f64>,
    pub aql: f64,
    pub tp: usize,
    pub in_network: usize,
    pub deferred: usize,
}

/// Full simulator state for one episode.
#[derive(Debug, Clone)]
pub struct SimState {
    net: RoadNetwork,
    cfg: SimConfig,
    schedule: Vec<ScheduledVehicle>,
    next_release: usize,
    /// Released vehicles waiting at each entry arm for room, FIFO.
    deferred: Vec<VecDeque<u32>>,
    lanes: Vec<LaneState>,
    /// Normalized (movement, cumulative weight) per approach that enters an
    /// intersection.
    turn_tables: Vec<Vec<(Movement, f64)>>,
    vehicles: Vec<Vehicle>,
    phases: Vec<Phase>,
    clock: u64,
    completed: usize,
    travel_time_sum: f64,
    queued_total: usize,
    wait_integral: f64,
    discharge_log: Option<Vec<Vec<u32>>>,
}

impl SimState {
    /// Empty network at t = 0 with every phase set to NS and the whole
    /// arrival schedule drawn from `cfg.seed`.
    pub fn reset(net: &RoadNetwork, flow: &FlowSpec, cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let schedule = flow.schedule(net, cfg)?;
        let step_len = cfg.free_flow_speed * f64::from(cfg.tick);
        let lanes = net
            .lanes()
            .iter()
            .map(|lane| {
                let length = net.approach(lane.approach).length_m;
                LaneState {
                    queue: VecDeque::new(),
                    in_flight: VecDeque::new(),
                    capacity: (length / cfg.spacing).floor() as usize,
                    travel_ticks: ((length / step_len).ceil() as u64).max(1),
                }
            })
            .collect::<Vec<_>>();
        if let Some(l) = lanes.iter().position(|l| l.capacity == 0) {
            return Err(SimError::InvalidConfig(format!(
                "lane {l} is shorter than one vehicle spacing"
            )));
        }
        let mut turn_tables = vec![Vec::new(); net.approaches().len()];
        for (a, approach) in net.approaches().iter().enumerate() {
            let (Some(v), Some(side)) = (approach.to, approach.enter_side) else { continue };
            let ratios = flow.ratios_at(net.id(v));
            let feasible: Vec<(Movement, f64)> = Movement::ALL
                .into_iter()
                .filter(|m| net.outgoing(v, side.exit_side(*m)).is_some())
                .map(|m| (m, ratios.weight(m)))
                .collect();
            if feasible.is_empty() {
                return Err(SimError::DeadEnd {
                    intersection: net.id(v).clone(),
                    side,
                });
            }
            let total: f64 = feasible.iter().map(|(_, w)| w).sum();
            let n = feasible.len() as f64;
            let mut acc = 0.0;
            turn_tables[a] = feasible
                .into_iter()
                .map(|(m, w)| {
                    acc += if total > 0.0 { w / total } else { 1.0 / n };
                    (m, acc)
                })
                .collect();
        }
        Ok(Self {
            net: net.clone(),
            cfg: cfg.clone(),
            schedule,
            next_release: 0,
            deferred: vec![VecDeque::new(); net.entry_arms().len()],
            lanes,
            turn_tables,
            vehicles: Vec::new(),
            phases: vec![Phase::NS; net.len()],
            clock: 0,
            completed: 0,
            travel_time_sum: 0.0,
            queued_total: 0,
            wait_integral: 0.0,
            discharge_log: None,
        })
    }

    pub fn net(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &[ScheduledVehicle] {
        &self.schedule
    }

    /// Elapsed ticks.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn time(&self) -> f64 {
        self.clock as f64 * f64::from(self.cfg.tick)
    }

    pub fn is_done(&self) -> bool {
        self.time() >= f64::from(self.cfg.episode_length)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn phase(&self, v: usize) -> Phase {
        self.phases[v]
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn wait(&self, lane: usize) -> usize {
        self.lanes[lane].queue.len()
    }

    pub fn wave(&self, lane: usize) -> usize {
        self.lanes[lane].wave()
    }

    pub fn capacity(&self, lane: usize) -> usize {
        self.lanes[lane].capacity
    }

    /// Vehicles in the queue of `lane`, head first.
    pub fn queue(&self, lane: usize) -> impl Iterator<Item = u32> + '_ {
        self.lanes[lane].queue.iter().copied()
    }

    /// Start recording, per lane, the ids of vehicles leaving its queue.
    pub fn record_discharges(&mut self) {
        self.discharge_log = Some(vec![Vec::new(); self.lanes.len()]);
    }

    pub fn discharges(&self) -> Option<&[Vec<u32>]> {
        self.discharge_log.as_deref()
    }

    /// Vehicles whose departure time has passed.
    pub fn released(&self) -> usize {
        self.vehicles.len()
    }

    pub fn deferred(&self) -> usize {
        self.deferred.iter().map(VecDeque::len).sum()
    }

    pub fn in_network(&self) -> usize {
        self.lanes.iter().map(LaneState::wave).sum()
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    /// Put a vehicle directly on `lane`, queued or at the start of the link,
    /// committed to `movement` at the lane's intersection.
    pub fn place_vehicle(&mut self, lane: usize, movement: Movement, queued: bool) -> Result<u32, SimError> {
        let approach = self.net.lane(lane).approach;
        if !self.net.lane(lane).movements.contains(movement)
            || !self.turn_tables[approach].iter().any(|(m, _)| *m == movement)
        {
            return Err(SimError::MovementNotServed { lane, movement });
        }
        if !self.lanes[lane].has_space() {
            return Err(SimError::LaneFull(lane));
        }
        let id = self.new_vehicle(self.time(), None);
        self.vehicles[id as usize].turn = movement;
        self.enter_lane(id, lane);
        if queued {
            self.lanes[lane].in_flight.pop_back();
            self.lanes[lane].queue.push_back(id);
            self.queued_total += 1;
        }
        Ok(id)
    }

    fn new_vehicle(&mut self, depart: f64, origin: Option<usize>) -> u32 {
        let id = self.vehicles.len() as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(u64::from(id) + 1);
        self.vehicles.push(Vehicle {
            id,
            depart,
            origin,
            entries: Vec::new(),
            arrival: None,
            turn: Movement::Straight,
            next_turn: None,
            rng,
        });
        id
    }

    fn draw_turn(&mut self, id: u32, approach: usize) -> Movement {
        let table = &self.turn_tables[approach];
        let u: f64 = self.vehicles[id as usize].rng.random();
        table
            .iter()
            .find(|(_, cum)| u < *cum)
            .or(table.last())
            .map(|(m, _)| *m)
            .expect("turn tables are non-empty for entering approaches")
    }

    /// Emptiest lane of `approach` serving `movement` that has room.
    fn pick_lane(&self, approach: usize, movement: Movement) -> Option<usize> {
        self.net
            .approach(approach)
            .lanes
            .iter()
            .copied()
            .filter(|&l| self.net.lane(l).movements.contains(movement) && self.lanes[l].has_space())
            .min_by_key(|&l| self.lanes[l].wave())
    }

    fn enter_lane(&mut self, id: u32, lane: usize) {
        let ready = self.clock + self.lanes[lane].travel_ticks;
        self.lanes[lane].in_flight.push_back((id, ready));
        self.vehicles[id as usize].entries.push((lane, self.clock));
    }

    /// Advance one control interval with `phases[v]` held at intersection v.
    /// Returns r_u for every intersection, measured at the end.
    pub fn step(&mut self, phases: &[Phase]) -> Result<Vec<f64>, SimError> {
        if phases.len() != self.net.len() {
            return Err(SimError::PhaseCount {
                expected: self.net.len(),
                got: phases.len(),
            });
        }
        if self.is_done() {
            return Err(SimError::EpisodeOver);
        }
        self.phases.copy_from_slice(phases);
        for _ in 0..self.cfg.ticks_per_step() {
            self.tick();
            self.check_invariants()?;
        }
        Ok((0..self.net.len()).map(|v| self.reward_at(v)).collect())
    }

    pub fn step_map(&mut self, phases: &BTreeMap<IntersectionId, Phase>) -> Result<Vec<f64>, SimError> {
        let list = self
            .net
            .ids()
            .iter()
            .map(|id| phases.get(id).copied().ok_or_else(|| SimError::MissingPhase(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.step(&list)
    }

    fn tick(&mut self) {
        let now = self.clock;
        let now_s = self.time();
        self.release_and_inject(now_s);
        for lane in &mut self.lanes {
            while let Some(&(id, ready)) = lane.in_flight.front() {
                if ready > now {
                    break;
                }
                lane.in_flight.pop_front();
                lane.queue.push_back(id);
                self.queued_total += 1;
            }
        }
        let end_s = (now + 1) as f64 * f64::from(self.cfg.tick);
        for v in 0..self.net.len() {
            let phase = self.phases[v];
            for i in 0..self.net.entering_lanes(v).len() {
                let lane = self.net.entering_lanes(v)[i];
                for _ in 0..self.cfg.saturation {
                    if !self.discharge_head(v, lane, phase, end_s) {
                        break;
                    }
                }
            }
        }
        self.clock += 1;
        let lanes = self.lanes.len().max(1) as f64;
        self.wait_integral += self.queued_total as f64 / lanes;
    }

    fn release_and_inject(&mut self, now_s: f64) {
        while let Some(&s) = self.schedule.get(self.next_release) {
            if s.depart > now_s {
                break;
            }
            let id = self.new_vehicle(s.depart, Some(s.arm));
            self.deferred[s.arm].push_back(id);
            self.next_release += 1;
        }
        for arm in 0..self.deferred.len() {
            let (v, side) = self.net.entry_arms()[arm];
            let approach = self.net.incoming(v, side).expect("entry arms have an incoming approach");
            while let Some(&id) = self.deferred[arm].front() {
                let turn = match self.vehicles[id as usize].next_turn {
                    Some(t) => t,
                    None => {
                        let t = self.draw_turn(id, approach);
                        self.vehicles[id as usize].next_turn = Some(t);
                        t
                    }
                };
                let Some(lane) = self.pick_lane(approach, turn) else { break };
                self.deferred[arm].pop_front();
                let veh = &mut self.vehicles[id as usize];
                veh.turn = turn;
                veh.next_turn = None;
                self.enter_lane(id, lane);
            }
        }
    }

    /// Try to move the head of `lane` through intersection v.
    fn discharge_head(&mut self, v: usize, lane: usize, phase: Phase, end_s: f64) -> bool {
        let Some(&id) = self.lanes[lane].queue.front() else { return false };
        let from = self.net.approach(self.net.lane(lane).approach).enter_side.expect("entering lane");
        let turn = self.vehicles[id as usize].turn;
        if !phase.permits(from, turn) {
            return false;
        }
        let out = self.net.outgoing(v, from.exit_side(turn)).expect("turn tables only hold feasible movements");
        let target = self.net.approach(out).to;
        let next_lane = match target {
            None => None,
            Some(_) => {
                let next = match self.vehicles[id as usize].next_turn {
                    Some(t) => t,
                    None => {
                        let t = self.draw_turn(id, out);
                        self.vehicles[id as usize].next_turn = Some(t);
                        t
                    }
                };
                match self.pick_lane(out, next) {
                    Some(l) => Some((l, next)),
                    None => return false,
                }
            }
        };
        self.lanes[lane].queue.pop_front();
        self.queued_total -= 1;
        if let Some(log) = &mut self.discharge_log {
            log[lane].push(id);
        }
        match next_lane {
            None => {
                let veh = &mut self.vehicles[id as usize];
                veh.arrival = Some(end_s);
                self.completed += 1;
                self.travel_time_sum += end_s - veh.depart;
            }
            Some((l, next)) => {
                let veh = &mut self.vehicles[id as usize];
                veh.turn = next;
                veh.next_turn = None;
                self.enter_lane(id, l);
            }
        }
        true
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        let fail = |detail: String| {
            Err(SimError::Invariant {
                time: self.clock,
                detail,
            })
        };
        let mut in_network = 0;
        let mut queued = 0;
        for (l, lane) in self.lanes.iter().enumerate() {
            let (wait, wave) = (lane.queue.len(), lane.wave());
            if wave > lane.capacity {
                return fail(format!("lane {l}: wait {wait}, wave {wave}, capacity {}", lane.capacity));
            }
            in_network += wave;
            queued += wait;
        }
        if queued != self.queued_total {
            return fail(format!("queue count {queued} != tracked {}", self.queued_total));
        }
        let released = self.released();
        let deferred = self.deferred();
        if released != in_network + self.completed + deferred {
            return fail(format!(
                "released {released} != in network {in_network} + completed {} + deferred {deferred}",
                self.completed
            ));
        }
        Ok(())
    }

    /// s_u: waits and waves of Lane[u] followed by the one-hot phase.
    pub fn observe(&self, u: &IntersectionId) -> Result<Vec<f64>, SimError> {
        Ok(self.observe_index(self.net.index_of(u)?))
    }

    pub fn observe_index(&self, v: usize) -> Vec<f64> {
        let lanes = self.net.entering_lanes(v);
        let mut obs = Vec::with_capacity(2 * lanes.len() + Phase::COUNT);
        obs.extend(lanes.iter().map(|&l| self.wait(l) as f64));
        obs.extend(lanes.iter().map(|&l| self.wave(l) as f64));
        obs.extend(Phase::ALL.iter().map(|&p| f64::from(u8::from(p == self.phases[v]))));
        obs
    }

    /// r_u = -sum of waiting vehicles over Lane[u].
    pub fn intersection_reward(&self, u: &IntersectionId) -> Result<f64, SimError> {
        Ok(self.reward_at(self.net.index_of(u)?))
    }

    pub fn reward_at(&self, v: usize) -> f64 {
        -(self.net.entering_lanes(v).iter().map(|&l| self.wait(l)).sum::<usize>() as f64)
    }

    pub fn pressure(&self, u: &IntersectionId, p: Phase) -> Result<f64, SimError> {
        Ok(self.pressure_at(self.net.index_of(u)?, p))
    }

    /// Sum over the movements `p` gives green to (right turns excluded, as
    /// they are green under every phase) of the upstream lane queue minus
    /// the mean queue on the downstream approach.
    pub fn pressure_at(&self, v: usize, p: Phase) -> f64 {
        let mut total = 0.0;
        for &l in self.net.entering_lanes(v) {
            let lane = self.net.lane(l);
            let from = self.net.approach(lane.approach).enter_side.expect("entering lane");
            for m in lane.movements.iter() {
                if !p.controls(from, m) {
                    continue;
                }
                let Some(out) = self.net.outgoing(v, from.exit_side(m)) else { continue };
                let down = &self.net.approach(out).lanes;
                let downstream = if down.is_empty() {
                    0.0
                } else {
                    down.iter().map(|&d| self.wait(d)).sum::<usize>() as f64 / down.len() as f64
                };
                total += self.wait(l) as f64 - downstream;
            }
        }
        total
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            att: (self.completed > 0).then(|| self.travel_time_sum / self.completed as f64),
            aql: if self.clock == 0 {
                0.0
            } else {
                self.wait_integral / self.clock as f64
            },
            tp: self.completed,
            in_network: self.in_network(),
            deferred: self.deferred(),
        }
    }
}
