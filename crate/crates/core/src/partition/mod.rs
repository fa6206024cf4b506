//! Network partitioning into star-shaped regions.
//!
//! A minimum dominating set W gives the region centers; every other
//! intersection joins exactly one adjacent center. Each region is laid out
//! in five fixed slots `[center, N, E, S, W]` so that a given network head
//! always sees the same spatial role; empty slots hold a fictitious
//! intersection.

mod graph;
mod regions;
mod solver;

use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{IntersectionId, NetError, RoadNetwork};

pub use graph::AdjacencyGraph;
pub use regions::{
    check_uniqueness, construct_regions, reassign_leaf, unique_center_per_leaf, validate_configuration,
    AssignmentOrder, Region, RegionConfiguration, Violation, SLOTS,
};
pub use solver::{brute_force, solve, SolveFailure, Solution, SolverOptions, BRUTE_FORCE_LIMIT};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("exhaustive enumeration is limited to {limit} intersections, network has {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("solver timed out after {elapsed:?}; best dominating set found has {} members", incumbent.len())]
    Timeout {
        elapsed: Duration,
        incumbent: DominatingSet,
    },
    #[error("not a dominating set: {} left unassigned ({})", unassigned.len(), join(unassigned))]
    NotDominating { unassigned: Vec<IntersectionId> },
    #[error("invalid assignment order: {0}")]
    InvalidOrder(String),
    #[error("`{leaf}` is not a leaf of the region centered at `{center}`")]
    NotALeaf {
        leaf: IntersectionId,
        center: IntersectionId,
    },
    #[error("`{0}` is not a region center")]
    NotACenter(IntersectionId),
    #[error("`{leaf}` is not adjacent to center `{center}`")]
    NotAdjacent {
        leaf: IntersectionId,
        center: IntersectionId,
    },
    #[error("invalid region configuration: {}", join(.0))]
    InvalidConfiguration(Vec<Violation>),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Set of region centers, kept sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DominatingSet(Vec<IntersectionId>);

impl DominatingSet {
    pub fn new(ids: impl IntoIterator<Item = IntersectionId>) -> Self {
        let set: BTreeSet<_> = ids.into_iter().collect();
        Self(set.into_iter().collect())
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(labels.into_iter().map(IntersectionId::from))
    }

    pub fn members(&self) -> &[IntersectionId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &IntersectionId) -> bool {
        self.0.binary_search(id).is_ok()
    }

    pub(crate) fn indices(&self, net: &RoadNetwork) -> Result<Vec<usize>, NetError> {
        self.0.iter().map(|id| net.index_of(id)).collect()
    }

    pub(crate) fn mask(&self, net: &RoadNetwork) -> Result<Vec<bool>, NetError> {
        let mut mask = vec![false; net.len()];
        for v in self.indices(net)? {
            mask[v] = true;
        }
        Ok(mask)
    }

    /// Intersections neither in the set nor adjacent to it.
    pub fn undominated(&self, net: &RoadNetwork) -> Result<Vec<IntersectionId>, NetError> {
        let mask = self.mask(net)?;
        Ok((0..net.len())
            .filter(|&v| !mask[v] && !net.neighbor_indices(v).any(|u| mask[u]))
            .map(|v| net.id(v).clone())
            .collect())
    }

    pub fn is_dominating(&self, net: &RoadNetwork) -> Result<bool, NetError> {
        Ok(self.undominated(net)?.is_empty())
    }

    fn from_indices(g: &AdjacencyGraph, idx: &[usize]) -> Self {
        Self::new(idx.iter().map(|&v| IntersectionId::new(g.label(v))))
    }
}

impl fmt::Display for DominatingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", join(&self.0))
    }
}

/// Domination number and the complete list of minimum dominating sets, by
/// exhaustive enumeration (at most [`BRUTE_FORCE_LIMIT`] intersections).
pub fn brute_force_min_dominating_set(net: &RoadNetwork) -> Result<(usize, Vec<DominatingSet>), PartitionError> {
    let g = AdjacencyGraph::from_network(net);
    let (k, sets) = brute_force(&g).ok_or(PartitionError::TooLarge {
        n: net.len(),
        limit: BRUTE_FORCE_LIMIT,
    })?;
    Ok((k, sets.iter().map(|s| DominatingSet::from_indices(&g, s)).collect()))
}

/// Certified minimum dominating set; ties go to the lexicographically
/// smallest set of ids.
pub fn solve_min_dominating_set(net: &RoadNetwork) -> Result<DominatingSet, PartitionError> {
    solve_min_dominating_set_with(net, &SolverOptions::default()).map(|(set, _)| set)
}

pub fn solve_min_dominating_set_with(
    net: &RoadNetwork,
    opts: &SolverOptions,
) -> Result<(DominatingSet, Solution), PartitionError> {
    let g = AdjacencyGraph::from_network(net);
    let started = std::time::Instant::now();
    match solve(&g, opts) {
        Ok(sol) => Ok((DominatingSet::from_indices(&g, &sol.centers), sol)),
        Err(SolveFailure::Timeout { incumbent }) => Err(PartitionError::Timeout {
            elapsed: started.elapsed(),
            incumbent: DominatingSet::from_indices(&g, &incumbent),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{make_cross, make_grid};

    #[test]
    fn grid_4x4_domination() {
        let net = make_grid(4, 4, 600.0, 600.0, 3).unwrap();
        let (gamma, all) = brute_force_min_dominating_set(&net).unwrap();
        assert_eq!(gamma, 4);
        let figure_set = DominatingSet::from_labels(["1-3", "2-1", "3-4", "4-2"]);
        assert!(all.contains(&figure_set));
        let solved = solve_min_dominating_set(&net).unwrap();
        assert_eq!(solved.len(), 4);
        assert!(solved.is_dominating(&net).unwrap());
        assert_eq!(solved, all[0]);
    }

    #[test]
    fn cross_center_dominates() {
        let net = make_cross(300.0, 3).unwrap();
        let set = solve_min_dominating_set(&net).unwrap();
        assert_eq!(set, DominatingSet::from_labels(["2-2"]));
    }

    #[test]
    fn enumeration_rejects_large_networks() {
        let net = make_grid(16, 3, 100.0, 350.0, 1).unwrap();
        assert!(matches!(
            brute_force_min_dominating_set(&net),
            Err(PartitionError::TooLarge { n: 48, .. })
        ));
    }

    #[test]
    fn undominated_scan() {
        let net = make_grid(1, 4, 100.0, 100.0, 1).unwrap();
        let set = DominatingSet::from_labels(["1-1"]);
        assert_eq!(
            set.undominated(&net).unwrap(),
            vec![IntersectionId::from("1-3"), IntersectionId::from("1-4")]
        );
    }
}
