use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DominatingSet, PartitionError};
use crate::net::{IntersectionId, RoadNetwork, Side};

/// Slots per region: center followed by the four compass leaves.
pub const SLOTS: usize = 5;

fn slot_of(side: Side) -> usize {
    1 + side.index()
}

/// Star region. `slots[0]` is the center, `slots[1 + side]` the leaf on that
/// side of the center; `None` is a fictitious intersection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub center: IntersectionId,
    pub slots: [Option<IntersectionId>; SLOTS],
    pub mask: [bool; SLOTS],
}

impl Region {
    fn seeded(center: IntersectionId) -> Self {
        let mut slots: [Option<IntersectionId>; SLOTS] = Default::default();
        slots[0] = Some(center.clone());
        Self {
            center,
            slots,
            mask: [true, false, false, false, false],
        }
    }

    fn put(&mut self, slot: usize, id: Option<IntersectionId>) {
        self.mask[slot] = id.is_some();
        self.slots[slot] = id;
    }

    pub fn members(&self) -> impl Iterator<Item = &IntersectionId> {
        self.slots.iter().flatten()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &IntersectionId> {
        self.slots[1..].iter().flatten()
    }

    pub fn real_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn fictitious_count(&self) -> usize {
        SLOTS - self.real_count()
    }

    pub fn is_fully_loaded(&self) -> bool {
        self.fictitious_count() == 0
    }
}

/// Disjoint star regions covering the network, sorted by center id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionConfiguration {
    pub regions: Vec<Region>,
}

impl RegionConfiguration {
    pub fn new(mut regions: Vec<Region>) -> Self {
        regions.sort_by(|a, b| a.center.cmp(&b.center));
        Self { regions }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn centers(&self) -> DominatingSet {
        DominatingSet::new(self.regions.iter().map(|r| r.center.clone()))
    }

    /// Position of the region owning `id` (first match).
    pub fn owner(&self, id: &IntersectionId) -> Option<usize> {
        self.regions.iter().position(|r| r.members().any(|m| m == id))
    }

    pub fn owners(&self) -> HashMap<IntersectionId, usize> {
        let mut map = HashMap::new();
        for (i, r) in self.regions.iter().enumerate() {
            for m in r.members() {
                map.entry(m.clone()).or_insert(i);
            }
        }
        map
    }

    fn region_mut(&mut self, center: &IntersectionId) -> Option<&mut Region> {
        self.regions.iter_mut().find(|r| &r.center == center)
    }
}

/// Iteration order for region construction: the order centers are visited
/// and, per center, the order its neighbors are offered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentOrder {
    pub centers: Vec<IntersectionId>,
    pub neighbors: BTreeMap<IntersectionId, Vec<IntersectionId>>,
}

impl AssignmentOrder {
    /// Centers by id, neighbors clockwise from north.
    pub fn canonical(net: &RoadNetwork, w: &DominatingSet) -> Result<Self, PartitionError> {
        let mut neighbors = BTreeMap::new();
        for c in w.members() {
            let v = net.index_of(c)?;
            neighbors.insert(c.clone(), net.neighbor_indices(v).map(|u| net.id(u).clone()).collect());
        }
        Ok(Self {
            centers: w.members().to_vec(),
            neighbors,
        })
    }

    /// Seeded shuffle of both the center order and every neighbor list.
    pub fn shuffled(net: &RoadNetwork, w: &DominatingSet, seed: u64) -> Result<Self, PartitionError> {
        let mut order = Self::canonical(net, w)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.centers.shuffle(&mut rng);
        for c in &order.centers {
            if let Some(list) = order.neighbors.get_mut(c) {
                list.shuffle(&mut rng);
            }
        }
        Ok(order)
    }

    fn check(&self, net: &RoadNetwork, w: &DominatingSet) -> Result<(), PartitionError> {
        let mut sorted = self.centers.clone();
        sorted.sort();
        if sorted != w.members() {
            return Err(PartitionError::InvalidOrder(
                "center order is not a permutation of the dominating set".into(),
            ));
        }
        for (c, list) in &self.neighbors {
            let v = net.index_of(c)?;
            let mut want: Vec<_> = net.neighbor_indices(v).map(|u| net.id(u).clone()).collect();
            want.sort();
            let mut got = list.clone();
            got.sort();
            if got != want {
                return Err(PartitionError::InvalidOrder(format!(
                    "neighbor order of `{c}` is not a permutation of its neighborhood"
                )));
            }
        }
        Ok(())
    }
}

/// Greedy star construction: visit centers in order and give each one every
/// still-unassigned neighbor, in the given neighbor order.
pub fn construct_regions(
    net: &RoadNetwork,
    w: &DominatingSet,
    order: &AssignmentOrder,
) -> Result<RegionConfiguration, PartitionError> {
    order.check(net, w)?;
    let mut assigned = w.mask(net)?;
    let mut regions = Vec::with_capacity(w.len());
    for c in &order.centers {
        let v = net.index_of(c)?;
        let mut region = Region::seeded(c.clone());
        let fallback;
        let list = match order.neighbors.get(c) {
            Some(list) => list,
            None => {
                fallback = net.neighbor_indices(v).map(|u| net.id(u).clone()).collect::<Vec<_>>();
                &fallback
            }
        };
        for u_id in list {
            let u = net.index_of(u_id)?;
            if !assigned[u] {
                assigned[u] = true;
                let side = net.side_of(v, u).expect("neighbor list holds adjacent intersections");
                region.put(slot_of(side), Some(u_id.clone()));
            }
        }
        regions.push(region);
    }
    let unassigned: Vec<_> = (0..net.len())
        .filter(|&v| !assigned[v])
        .map(|v| net.id(v).clone())
        .collect();
    if !unassigned.is_empty() {
        return Err(PartitionError::NotDominating { unassigned });
    }
    Ok(RegionConfiguration::new(regions))
}

/// True when every pair of centers is at least three hops apart, in which
/// case the construction does not depend on the iteration order. Only the
/// ids are validated; the distance test itself does not need `w` to dominate.
pub fn check_uniqueness(net: &RoadNetwork, w: &DominatingSet) -> Result<bool, PartitionError> {
    let idx = w.indices(net)?;
    for (i, &a) in idx.iter().enumerate() {
        let dist = net.hops_from(a);
        if idx[i + 1..].iter().any(|&b| matches!(dist[b], Some(d) if d < 3)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every non-center has exactly one center among its neighbors.
pub fn unique_center_per_leaf(net: &RoadNetwork, w: &DominatingSet) -> Result<bool, PartitionError> {
    let mask = w.mask(net)?;
    Ok((0..net.len())
        .filter(|&z| !mask[z])
        .all(|z| net.neighbor_indices(z).filter(|&u| mask[u]).count() == 1))
}

/// Move leaf `z` from the region of `from` to the region of `to`.
pub fn reassign_leaf(
    net: &RoadNetwork,
    config: &RegionConfiguration,
    z: &IntersectionId,
    from: &IntersectionId,
    to: &IntersectionId,
) -> Result<RegionConfiguration, PartitionError> {
    let zi = net.index_of(z)?;
    let fi = net.index_of(from)?;
    let ti = net.index_of(to)?;
    let source = config
        .regions
        .iter()
        .find(|r| &r.center == from)
        .ok_or_else(|| PartitionError::NotACenter(from.clone()))?;
    if !source.leaves().any(|l| l == z) {
        return Err(PartitionError::NotALeaf {
            leaf: z.clone(),
            center: from.clone(),
        });
    }
    if !config.regions.iter().any(|r| &r.center == to) {
        return Err(PartitionError::NotACenter(to.clone()));
    }
    let to_side = net.side_of(ti, zi).ok_or_else(|| PartitionError::NotAdjacent {
        leaf: z.clone(),
        center: to.clone(),
    })?;
    let from_side = net.side_of(fi, zi).ok_or_else(|| PartitionError::NotAdjacent {
        leaf: z.clone(),
        center: from.clone(),
    })?;
    let mut next = config.clone();
    next.region_mut(from).expect("checked above").put(slot_of(from_side), None);
    next.region_mut(to).expect("checked above").put(slot_of(to_side), Some(z.clone()));
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    UnknownIntersection(IntersectionId),
    Uncovered(IntersectionId),
    Duplicated(IntersectionId),
    CenterSlot(IntersectionId),
    NotAdjacent {
        center: IntersectionId,
        leaf: IntersectionId,
    },
    WrongSlot {
        center: IntersectionId,
        leaf: IntersectionId,
        slot: usize,
    },
    MaskMismatch {
        center: IntersectionId,
        slot: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownIntersection(id) => write!(f, "`{id}` is not in the network"),
            Violation::Uncovered(id) => write!(f, "`{id}` belongs to no region"),
            Violation::Duplicated(id) => write!(f, "`{id}` belongs to more than one region"),
            Violation::CenterSlot(c) => write!(f, "region `{c}` does not hold its center in slot 0"),
            Violation::NotAdjacent { center, leaf } => {
                write!(f, "leaf `{leaf}` is not adjacent to center `{center}`")
            }
            Violation::WrongSlot { center, leaf, slot } => {
                write!(f, "leaf `{leaf}` of `{center}` sits in slot {slot}, not its compass slot")
            }
            Violation::MaskMismatch { center, slot } => {
                write!(f, "mask of region `{center}` disagrees with slot {slot}")
            }
        }
    }
}

/// Coverage, disjointness, star topology and slot/compass consistency.
/// An empty list means the configuration is valid.
pub fn validate_configuration(net: &RoadNetwork, config: &RegionConfiguration) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashSet<&IntersectionId> = HashSet::new();
    let mut reported = HashSet::new();
    for region in &config.regions {
        let center = &region.center;
        if region.slots[0].as_ref() != Some(center) {
            out.push(Violation::CenterSlot(center.clone()));
        }
        for slot in 0..SLOTS {
            if region.mask[slot] != region.slots[slot].is_some() {
                out.push(Violation::MaskMismatch {
                    center: center.clone(),
                    slot,
                });
            }
        }
        for id in region.members() {
            if !seen.insert(id) && reported.insert(id.clone()) {
                out.push(Violation::Duplicated(id.clone()));
            }
        }
        let Ok(ci) = net.index_of(center) else {
            out.push(Violation::UnknownIntersection(center.clone()));
            continue;
        };
        for (slot, leaf) in region.slots.iter().enumerate().skip(1) {
            let Some(leaf) = leaf else { continue };
            let Ok(li) = net.index_of(leaf) else {
                out.push(Violation::UnknownIntersection(leaf.clone()));
                continue;
            };
            match net.side_of(ci, li) {
                None => out.push(Violation::NotAdjacent {
                    center: center.clone(),
                    leaf: leaf.clone(),
                }),
                Some(side) if slot_of(side) != slot => out.push(Violation::WrongSlot {
                    center: center.clone(),
                    leaf: leaf.clone(),
                    slot,
                }),
                Some(_) => {}
            }
        }
    }
    for id in net.ids() {
        if !seen.contains(id) {
            out.push(Violation::Uncovered(id.clone()));
        }
    }
    out
}
