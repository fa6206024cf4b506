//! Exact minimum dominating set.
//!
//! The search is a branch-and-bound over binary variables x_v (x_v = 0 marks
//! a center) maximizing the number of leaves, i.e. minimizing the number of
//! centers. At every node the most constrained undominated vertex is picked
//! and its admissible centers (its closed neighborhood minus vertices already
//! fixed to x = 1) are tried in descending-degree order; trying candidate c
//! means fixing x_c = 0, and moving on to the next sibling fixes x_c = 1.
//! The lower bound is the number of fixed centers plus a packing of
//! undominated vertices whose admissible sets are pairwise disjoint, each of
//! which needs its own center.

use std::time::{Duration, Instant};

use super::graph::AdjacencyGraph;

/// Largest graph the exhaustive enumeration accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fixed {
    Free,
    Center,
    Leaf,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub time_limit: Option<Duration>,
    /// Return the lexicographically smallest optimum (by label) instead of
    /// the first optimum found.
    pub lexicographic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            time_limit: Some(Duration::from_secs(60)),
            lexicographic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    /// Center indices, sorted by label.
    pub centers: Vec<usize>,
    /// Lower bound at the root node.
    pub root_bound: usize,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveFailure {
    /// The time limit expired; carries the best dominating set known.
    Timeout { incumbent: Vec<usize> },
}

struct Search<'g> {
    g: &'g AdjacencyGraph,
    fixed: Vec<Fixed>,
    /// Number of centers in the closed neighborhood of each vertex.
    covered: Vec<u32>,
    centers: usize,
    stamp: Vec<u64>,
    epoch: u64,
    nodes: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl<'g> Search<'g> {
    fn new(g: &'g AdjacencyGraph, deadline: Option<Instant>) -> Self {
        Self {
            g,
            fixed: vec![Fixed::Free; g.len()],
            covered: vec![0; g.len()],
            centers: 0,
            stamp: vec![0; g.len()],
            epoch: 0,
            nodes: 0,
            deadline,
            timed_out: false,
        }
    }

    fn closed(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(v).chain(self.g.neighbors(v).iter().copied())
    }

    fn set_center(&mut self, v: usize) {
        self.fixed[v] = Fixed::Center;
        self.centers += 1;
        for u in std::iter::once(v).chain(self.g.neighbors(v).iter().copied()) {
            self.covered[u] += 1;
        }
    }

    fn unset_center(&mut self, v: usize) {
        self.fixed[v] = Fixed::Free;
        self.centers -= 1;
        for u in std::iter::once(v).chain(self.g.neighbors(v).iter().copied()) {
            self.covered[u] -= 1;
        }
    }

    fn admissible(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.closed(v).filter(|&u| self.fixed[u] != Fixed::Leaf)
    }

    /// Returns (bound, branching vertex). `None` bound means infeasible.
    fn bound(&mut self) -> (Option<usize>, Option<usize>) {
        let mut pending: Vec<(usize, usize)> = Vec::new();
        for v in 0..self.g.len() {
            if self.covered[v] == 0 {
                let k = self.admissible(v).count();
                if k == 0 {
                    return (None, None);
                }
                pending.push((k, v));
            }
        }
        if pending.is_empty() {
            return (Some(self.centers), None);
        }
        pending.sort_unstable();
        self.epoch += 1;
        let mut packed = 0;
        for &(_, v) in &pending {
            let free = self.admissible(v).all(|u| self.stamp[u] != self.epoch);
            if free {
                packed += 1;
                let marks: Vec<usize> = self.admissible(v).collect();
                for u in marks {
                    self.stamp[u] = self.epoch;
                }
            }
        }
        (Some(self.centers + packed), Some(pending[0].1))
    }

    fn out_of_time(&mut self) -> bool {
        if self.timed_out {
            return true;
        }
        if self.nodes % 1024 == 1 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn current_centers(&self) -> Vec<usize> {
        (0..self.g.len()).filter(|&v| self.fixed[v] == Fixed::Center).collect()
    }

    /// Depth-first search for a dominating set with fewer than `*best_size`
    /// centers (or at most `cap` when `first_only`). Improves `best` in place.
    fn dfs(&mut self, best_size: &mut usize, best: &mut Option<Vec<usize>>, first_only: bool) -> bool {
        self.nodes += 1;
        if self.out_of_time() {
            return false;
        }
        let (bound, branch) = self.bound();
        let Some(bound) = bound else { return false };
        if bound >= *best_size {
            return false;
        }
        let Some(v) = branch else {
            *best_size = self.centers;
            *best = Some(self.current_centers());
            return first_only;
        };
        let mut candidates: Vec<usize> = self.admissible(v).filter(|&u| self.fixed[u] == Fixed::Free).collect();
        candidates.sort_by(|&a, &b| {
            self.g
                .degree(b)
                .cmp(&self.g.degree(a))
                .then_with(|| self.g.label(a).cmp(self.g.label(b)))
        });
        let mut excluded = Vec::new();
        let mut done = false;
        for c in candidates {
            self.set_center(c);
            done = self.dfs(best_size, best, first_only);
            self.unset_center(c);
            if done || self.timed_out {
                break;
            }
            self.fixed[c] = Fixed::Leaf;
            excluded.push(c);
        }
        for c in excluded {
            self.fixed[c] = Fixed::Free;
        }
        done
    }
}

fn greedy(g: &AdjacencyGraph) -> Vec<usize> {
    let mut covered = vec![false; g.len()];
    let mut chosen = Vec::new();
    loop {
        let gain = |v: usize| {
            usize::from(!covered[v]) + g.neighbors(v).iter().filter(|&&u| !covered[u]).count()
        };
        let best = (0..g.len())
            .filter(|&v| gain(v) > 0)
            .max_by(|&a, &b| gain(a).cmp(&gain(b)).then_with(|| g.label(b).cmp(g.label(a))));
        let Some(v) = best else { break };
        chosen.push(v);
        covered[v] = true;
        for &u in g.neighbors(v) {
            covered[u] = true;
        }
    }
    chosen
}

fn sort_by_label(g: &AdjacencyGraph, mut set: Vec<usize>) -> Vec<usize> {
    set.sort_by(|&a, &b| g.label(a).cmp(g.label(b)));
    set
}

/// Exact minimum dominating set by branch and bound.
pub fn solve(g: &AdjacencyGraph, opts: &SolverOptions) -> Result<Solution, SolveFailure> {
    let deadline = opts.time_limit.map(|t| Instant::now() + t);
    let incumbent = greedy(g);
    let mut best_size = incumbent.len() + 1;
    let mut best = None;
    let mut search = Search::new(g, deadline);
    let root_bound = search.bound().0.unwrap_or(0);
    // Seeding with |greedy| + 1 lets the search re-find a set of the greedy
    // size, so `best` always comes from the search itself.
    search.dfs(&mut best_size, &mut best, false);
    let mut nodes = search.nodes;
    if search.timed_out {
        return Err(SolveFailure::Timeout {
            incumbent: sort_by_label(g, best.unwrap_or(incumbent)),
        });
    }
    let optimum = best.expect("greedy size is always attainable");
    let gamma = optimum.len();
    if !opts.lexicographic {
        return Ok(Solution {
            centers: sort_by_label(g, optimum),
            root_bound,
            nodes,
        });
    }

    // Fix vertices in label order, trying "center" first; each decision is
    // kept only if a dominating set of size gamma is still reachable.
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g.label(a).cmp(g.label(b)));
    let mut search = Search::new(g, deadline);
    for v in order {
        if search.centers == gamma {
            break;
        }
        search.set_center(v);
        let mut size = gamma + 1;
        let mut found = None;
        search.dfs(&mut size, &mut found, true);
        if search.timed_out {
            return Err(SolveFailure::Timeout {
                incumbent: sort_by_label(g, optimum),
            });
        }
        if found.is_none() {
            search.unset_center(v);
            search.fixed[v] = Fixed::Leaf;
        }
    }
    nodes += search.nodes;
    let centers = search.current_centers();
    debug_assert_eq!(centers.len(), gamma);
    Ok(Solution {
        centers: sort_by_label(g, centers),
        root_bound,
        nodes,
    })
}

/// Every minimum dominating set, by enumerating subsets in increasing size.
/// Returns `None` above [`BRUTE_FORCE_LIMIT`] vertices.
pub fn brute_force(g: &AdjacencyGraph) -> Option<(usize, Vec<Vec<usize>>)> {
    let n = g.len();
    if n > BRUTE_FORCE_LIMIT {
        return None;
    }
    if n == 0 {
        return Some((0, vec![Vec::new()]));
    }
    let closed: Vec<u32> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(1u32 << v, |m, &u| m | 1 << u))
        .collect();
    let full = (1u32 << n) - 1;
    for k in 1..=n {
        let mut found = Vec::new();
        // Gosper's hack: all n-bit masks with k bits set, ascending.
        let mut mask: u32 = (1 << k) - 1;
        while mask <= full {
            let mut cover = 0;
            let mut bits = mask;
            while bits != 0 {
                cover |= closed[bits.trailing_zeros() as usize];
                bits &= bits - 1;
            }
            if cover == full {
                found.push(sort_by_label(g, (0..n).filter(|&v| mask >> v & 1 == 1).collect()));
            }
            let low = mask & mask.wrapping_neg();
            let ripple = mask + low;
            if ripple == 0 || ripple > full {
                break;
            }
            mask = (((ripple ^ mask) >> 2) / low) | ripple;
        }
        if !found.is_empty() {
            let labels = |s: &Vec<usize>| s.iter().map(|&v| g.label(v).to_owned()).collect::<Vec<_>>();
            found.sort_by_key(labels);
            return Some((k, found));
        }
    }
    unreachable!("the full vertex set dominates")
}
