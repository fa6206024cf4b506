use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::agent::{build_observation, Agent};
use crate::net::Phase;
use crate::partition::RegionConfiguration;
use crate::sim::SimState;

/// Chooses a phase for every intersection once per control interval.
pub trait Controller {
    fn name(&self) -> &str;

    /// Called at the start of every episode.
    fn reset(&mut self, _seed: u64) {}

    fn phases(&mut self, sim: &SimState) -> Result<Vec<Phase>, HarnessError>;
}

/// Every intersection runs the same cycle, no offsets.
#[derive(Debug, Clone)]
pub struct FixedTime {
    /// (phase, duration in control intervals)
    cycle: Vec<(Phase, u32)>,
    period: u64,
    step: u64,
}

impl FixedTime {
    pub fn new(cycle: Vec<(Phase, u32)>) -> Result<Self, HarnessError> {
        if cycle.is_empty() {
            return Err(HarnessError::InvalidController("fixed-time cycle is empty".into()));
        }
        if cycle.iter().any(|(_, d)| *d == 0) {
            return Err(HarnessError::InvalidController("fixed-time durations must be at least 1".into()));
        }
        let period = cycle.iter().map(|(_, d)| u64::from(*d)).sum();
        Ok(Self { cycle, period, step: 0 })
    }

    /// NS, NSL, EW, EWL for one interval each.
    pub fn default_cycle() -> Self {
        Self::new(Phase::ALL.iter().map(|&p| (p, 1)).collect()).expect("default cycle is valid")
    }

    pub fn phase_at(&self, step: u64) -> Phase {
        let mut t = step % self.period;
        for &(p, d) in &self.cycle {
            if t < u64::from(d) {
                return p;
            }
            t -= u64::from(d);
        }
        unreachable!("step reduced modulo the period")
    }
}

impl Controller for FixedTime {
    fn name(&self) -> &str {
        "fixed"
    }

    fn reset(&mut self, _seed: u64) {
        self.step = 0;
    }

    fn phases(&mut self, sim: &SimState) -> Result<Vec<Phase>, HarnessError> {
        let p = self.phase_at(self.step);
        self.step += 1;
        Ok(vec![p; sim.net().len()])
    }
}

/// Per-intersection argmax of pressure; ties go to the earlier phase.
#[derive(Debug, Clone, Default)]
pub struct MaxPressure;

impl MaxPressure {
    pub fn choose(sim: &SimState, v: usize) -> Phase {
        let mut best = Phase::NS;
        let mut best_p = sim.pressure_at(v, best);
        for &p in &Phase::ALL[1..] {
            let x = sim.pressure_at(v, p);
            if x > best_p {
                best = p;
                best_p = x;
            }
        }
        best
    }
}

impl Controller for MaxPressure {
    fn name(&self) -> &str {
        "maxpressure"
    }

    fn phases(&mut self, sim: &SimState) -> Result<Vec<Phase>, HarnessError> {
        Ok((0..sim.net().len()).map(|v| Self::choose(sim, v)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct RandomPhases {
    rng: ChaCha8Rng,
}

impl RandomPhases {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomPhases {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn phases(&mut self, sim: &SimState) -> Result<Vec<Phase>, HarnessError> {
        Ok((0..sim.net().len())
            .map(|_| Phase::ALL[self.rng.random_range(0..Phase::COUNT)])
            .collect())
    }
}

/// Trained agent acting greedily in every region.
pub struct Greedy<'a> {
    agent: &'a Agent,
    regions: &'a RegionConfiguration,
    lanes: usize,
}

impl<'a> Greedy<'a> {
    pub fn new(agent: &'a Agent, regions: &'a RegionConfiguration, lanes: usize) -> Self {
        Self { agent, regions, lanes }
    }
}

impl Controller for Greedy<'_> {
    fn name(&self) -> &str {
        "abdq"
    }

    fn phases(&mut self, sim: &SimState) -> Result<Vec<Phase>, HarnessError> {
        let mut joint = Vec::with_capacity(self.regions.len());
        for region in &self.regions.regions {
            let obs = build_observation(sim, region, self.lanes)?;
            joint.push(self.agent.act_greedy(&obs, &region.mask)?);
        }
        super::assemble_phases(sim.net(), self.regions, &joint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{make_grid, Movement, Side};
    use crate::sim::{FlowSpec, SimConfig};

    fn empty_sim(rows: usize, cols: usize) -> SimState {
        let net = make_grid(rows, cols, 300.0, 300.0, 3).unwrap();
        SimState::reset(&net, &FlowSpec::empty(), &SimConfig::default()).unwrap()
    }

    #[test]
    fn default_cycle_sequence() {
        let mut c = FixedTime::default_cycle();
        let sim = empty_sim(1, 2);
        let seq: Vec<Vec<Phase>> = (0..5).map(|_| c.phases(&sim).unwrap()).collect();
        assert_eq!(seq[0], vec![Phase::NS; 2]);
        assert_eq!(seq[1], vec![Phase::NSL; 2]);
        assert_eq!(seq[2], vec![Phase::EW; 2]);
        assert_eq!(seq[3], vec![Phase::EWL; 2]);
        assert_eq!(seq[4], vec![Phase::NS; 2]);
        c.reset(0);
        assert_eq!(c.phases(&sim).unwrap(), vec![Phase::NS; 2]);
    }

    #[test]
    fn cycle_with_durations() {
        let c = FixedTime::new(vec![(Phase::EW, 2), (Phase::NS, 1)]).unwrap();
        let seq: Vec<Phase> = (0..6).map(|s| c.phase_at(s)).collect();
        assert_eq!(seq, vec![Phase::EW, Phase::EW, Phase::NS, Phase::EW, Phase::EW, Phase::NS]);
        let constant = FixedTime::new(vec![(Phase::NSL, 1)]).unwrap();
        assert!((0..10).all(|s| constant.phase_at(s) == Phase::NSL));
        assert!(FixedTime::new(vec![]).is_err());
        assert!(FixedTime::new(vec![(Phase::NS, 0)]).is_err());
    }

    #[test]
    fn max_pressure_choices() {
        let mut sim = empty_sim(1, 1);
        assert_eq!(MaxPressure.phases(&sim).unwrap(), vec![Phase::NS]);
        let net = sim.net().clone();
        let lanes_of = |side: Side| net.approach(net.incoming(0, side).unwrap()).lanes.clone();
        // Three lanes per approach: [left, through, right].
        for _ in 0..4 {
            sim.place_vehicle(lanes_of(Side::N)[1], Movement::Straight, true).unwrap();
        }
        assert_eq!(MaxPressure.phases(&sim).unwrap(), vec![Phase::NS]);
        for _ in 0..3 {
            sim.place_vehicle(lanes_of(Side::E)[0], Movement::Left, true).unwrap();
            sim.place_vehicle(lanes_of(Side::W)[0], Movement::Left, true).unwrap();
        }
        // NS: 4, EWL: 3 + 3 = 6.
        assert_eq!(sim.pressure_at(0, Phase::NS), 4.0);
        assert_eq!(sim.pressure_at(0, Phase::EWL), 6.0);
        assert_eq!(MaxPressure.phases(&sim).unwrap(), vec![Phase::EWL]);
    }

    #[test]
    fn random_controller_is_seeded() {
        let sim = empty_sim(2, 2);
        let mut a = RandomPhases::new(4);
        let mut b = RandomPhases::new(4);
        for _ in 0..10 {
            assert_eq!(a.phases(&sim).unwrap(), b.phases(&sim).unwrap());
        }
    }
}
