use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::partition::SLOTS;

/// One regional experience. Observations hold small integer counts and
/// one-hot flags, which f32 stores exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f32>,
    pub actions: [usize; SLOTS],
    pub reward: f64,
    pub next_obs: Vec<f32>,
    pub mask: [bool; SLOTS],
}

impl Transition {
    pub fn new(obs: &[f64], actions: [usize; SLOTS], reward: f64, next_obs: &[f64], mask: [bool; SLOTS]) -> Self {
        Self {
            obs: obs.iter().map(|&x| x as f32).collect(),
            actions,
            reward,
            next_obs: next_obs.iter().map(|&x| x as f32).collect(),
            mask,
        }
    }
}

/// Ring buffer; once full the oldest transition is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` distinct transitions drawn uniformly (fewer if the buffer is
    /// smaller).
    pub fn sample(&mut self, n: usize) -> Vec<&Transition> {
        let n = n.min(self.items.len());
        index::sample(&mut self.rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}
