use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Approach, IntersectionId, Lane, MovementSet, NetError, RoadNetwork, Side, MAX_DEGREE};

/// On-disk road-net layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadNetFile {
    pub intersections: Vec<IntersectionRecord>,
    #[serde(default)]
    pub approaches: Vec<ApproachRecord>,
    #[serde(default)]
    pub boundary: Vec<BoundaryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionRecord {
    pub id: String,
    #[serde(default)]
    pub north: Option<String>,
    #[serde(default)]
    pub east: Option<String>,
    #[serde(default)]
    pub south: Option<String>,
    #[serde(default)]
    pub west: Option<String>,
}

impl IntersectionRecord {
    pub fn isolated(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            north: None,
            east: None,
            south: None,
            west: None,
        }
    }

    fn slot(&self, side: Side) -> Option<&String> {
        match side {
            Side::N => self.north.as_ref(),
            Side::E => self.east.as_ref(),
            Side::S => self.south.as_ref(),
            Side::W => self.west.as_ref(),
        }
    }

    fn slot_mut(&mut self, side: Side) -> &mut Option<String> {
        match side {
            Side::N => &mut self.north,
            Side::E => &mut self.east,
            Side::S => &mut self.south,
            Side::W => &mut self.west,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachRecord {
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub lanes: usize,
}

/// A boundary arm on `side` of `intersection`. `entry` adds a source
/// approach into the intersection, `exit` a sink approach out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryRecord {
    pub intersection: String,
    pub side: Side,
    pub length_m: f64,
    pub lanes: usize,
    #[serde(default = "yes")]
    pub entry: bool,
    #[serde(default = "yes")]
    pub exit: bool,
}

fn yes() -> bool {
    true
}

fn check_geometry(what: impl FnOnce() -> String, length_m: f64, lanes: usize) -> Result<(), NetError> {
    if !(length_m.is_finite() && length_m > 0.0) {
        return Err(NetError::InvalidGeometry {
            what: what(),
            reason: format!("length {length_m} m is not positive"),
        });
    }
    if lanes == 0 {
        return Err(NetError::InvalidGeometry {
            what: what(),
            reason: "needs at least one lane".into(),
        });
    }
    Ok(())
}

pub(super) fn build(file: &RoadNetFile) -> Result<RoadNetwork, NetError> {
    let n = file.intersections.len();
    let mut ids = Vec::with_capacity(n);
    let mut index = HashMap::with_capacity(n);
    for rec in &file.intersections {
        let id = IntersectionId::new(rec.id.clone());
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(NetError::DuplicateIntersection(rec.id.clone()));
        }
        ids.push(id);
    }
    let lookup = |name: &str| -> Result<usize, NetError> {
        index
            .get(&IntersectionId::from(name))
            .copied()
            .ok_or_else(|| NetError::UnknownIntersection(name.to_owned()))
    };

    // Degree is checked over every adjacency the file mentions before
    // anything else, so a fifth neighbor is reported as such.
    let mut adjacency = vec![BTreeSet::new(); n];
    let mut slots = vec![[None; 4]; n];
    for (v, rec) in file.intersections.iter().enumerate() {
        for side in Side::ALL {
            if let Some(name) = rec.slot(side) {
                let u = lookup(name)?;
                if u == v {
                    return Err(NetError::SelfLoop(rec.id.clone()));
                }
                slots[v][side.index()] = Some(u);
                adjacency[v].insert(u);
                adjacency[u].insert(v);
            }
        }
    }
    let mut endpoints = Vec::with_capacity(file.approaches.len());
    for rec in &file.approaches {
        let (f, t) = (lookup(&rec.from)?, lookup(&rec.to)?);
        if f == t {
            return Err(NetError::SelfLoop(rec.from.clone()));
        }
        adjacency[f].insert(t);
        adjacency[t].insert(f);
        endpoints.push((f, t));
    }
    for (v, adj) in adjacency.iter().enumerate() {
        if adj.len() > MAX_DEGREE {
            return Err(NetError::DegreeExceeded {
                id: ids[v].to_string(),
                degree: adj.len(),
            });
        }
    }

    for v in 0..n {
        for side in Side::ALL {
            if let Some(u) = slots[v][side.index()] {
                if slots[u][side.opposite().index()] != Some(v) {
                    return Err(NetError::AsymmetricSlot {
                        id: ids[v].to_string(),
                        neighbor: ids[u].to_string(),
                        side,
                        opposite: side.opposite(),
                    });
                }
            }
        }
    }

    let mut approaches = Vec::new();
    let mut lane_counts = Vec::new();
    let mut incoming = vec![[None; 4]; n];
    let mut outgoing = vec![[None; 4]; n];
    let mut seen = HashSet::new();
    for (rec, &(f, t)) in file.approaches.iter().zip(&endpoints) {
        if !seen.insert((f, t)) {
            return Err(NetError::DuplicateApproach {
                from: rec.from.clone(),
                to: rec.to.clone(),
            });
        }
        let side = Side::ALL
            .into_iter()
            .find(|s| slots[f][s.index()] == Some(t))
            .ok_or_else(|| NetError::ApproachWithoutSlot {
                from: rec.from.clone(),
                to: rec.to.clone(),
            })?;
        check_geometry(|| format!("approach {} -> {}", rec.from, rec.to), rec.length_m, rec.lanes)?;
        outgoing[f][side.index()] = Some(approaches.len());
        incoming[t][side.opposite().index()] = Some(approaches.len());
        lane_counts.push(rec.lanes);
        approaches.push(Approach {
            from: Some(f),
            to: Some(t),
            enter_side: Some(side.opposite()),
            leave_side: Some(side),
            length_m: rec.length_m,
            lanes: Vec::new(),
            sink_lanes: 0,
        });
    }
    for v in 0..n {
        for side in Side::ALL {
            if let Some(u) = slots[v][side.index()] {
                if outgoing[v][side.index()].is_none() {
                    return Err(NetError::MissingApproach {
                        id: ids[v].to_string(),
                        neighbor: ids[u].to_string(),
                        side,
                    });
                }
            }
        }
    }

    let mut entry_arms = Vec::new();
    let mut boundary_seen = HashSet::new();
    for rec in &file.boundary {
        let v = lookup(&rec.intersection)?;
        if slots[v][rec.side.index()].is_some() {
            return Err(NetError::BoundaryOnOccupiedSlot {
                id: rec.intersection.clone(),
                side: rec.side,
            });
        }
        if !boundary_seen.insert((v, rec.side)) {
            return Err(NetError::DuplicateBoundary {
                id: rec.intersection.clone(),
                side: rec.side,
            });
        }
        check_geometry(
            || format!("boundary arm {}:{}", rec.intersection, rec.side),
            rec.length_m,
            rec.lanes,
        )?;
        if rec.entry {
            incoming[v][rec.side.index()] = Some(approaches.len());
            entry_arms.push((v, rec.side));
            lane_counts.push(rec.lanes);
            approaches.push(Approach {
                from: None,
                to: Some(v),
                enter_side: Some(rec.side),
                leave_side: None,
                length_m: rec.length_m,
                lanes: Vec::new(),
                sink_lanes: 0,
            });
        }
        if rec.exit {
            outgoing[v][rec.side.index()] = Some(approaches.len());
            lane_counts.push(rec.lanes);
            approaches.push(Approach {
                from: Some(v),
                to: None,
                enter_side: None,
                leave_side: Some(rec.side),
                length_m: rec.length_m,
                lanes: Vec::new(),
                sink_lanes: 0,
            });
        }
    }
    entry_arms.sort();

    // Only approaches that end at an intersection carry simulated lanes;
    // sinks complete trips on entry.
    let mut lanes = Vec::new();
    for (a, (approach, &count)) in approaches.iter_mut().zip(&lane_counts).enumerate() {
        if approach.to.is_none() {
            approach.sink_lanes = count;
            continue;
        }
        for i in 0..count {
            approach.lanes.push(lanes.len());
            lanes.push(Lane {
                approach: a,
                index: i,
                movements: MovementSet::for_lane(i, count),
            });
        }
    }
    let entering = (0..n)
        .map(|v| {
            Side::ALL
                .into_iter()
                .filter_map(|s| incoming[v][s.index()])
                .flat_map(|a| approaches[a].lanes.iter().copied())
                .collect()
        })
        .collect();

    Ok(RoadNetwork {
        ids,
        index,
        slots,
        approaches,
        incoming,
        outgoing,
        lanes,
        entering,
        entry_arms,
    })
}

pub(super) fn export(net: &RoadNetwork) -> RoadNetFile {
    let mut intersections: Vec<IntersectionRecord> = net
        .ids
        .iter()
        .map(|id| IntersectionRecord::isolated(id.as_str()))
        .collect();
    for (v, rec) in intersections.iter_mut().enumerate() {
        for side in Side::ALL {
            *rec.slot_mut(side) = net.slot(v, side).map(|u| net.ids[u].to_string());
        }
    }
    let mut approaches = Vec::new();
    // (intersection, side) -> (length, lanes, entry, exit)
    let mut boundary: BTreeMap<(usize, Side), (f64, usize, bool, bool)> = BTreeMap::new();
    for a in &net.approaches {
        match (a.from, a.to) {
            (Some(f), Some(t)) => approaches.push(ApproachRecord {
                from: net.ids[f].to_string(),
                to: net.ids[t].to_string(),
                length_m: a.length_m,
                lanes: a.lanes.len(),
            }),
            (None, Some(t)) => {
                let e = boundary
                    .entry((t, a.enter_side.expect("entry side")))
                    .or_insert((a.length_m, a.lanes.len(), false, false));
                e.0 = a.length_m;
                e.1 = a.lanes.len();
                e.2 = true;
            }
            (Some(f), None) => {
                let e = boundary
                    .entry((f, a.leave_side.expect("exit side")))
                    .or_insert((a.length_m, a.sink_lanes, false, false));
                e.3 = true;
            }
            (None, None) => unreachable!("approach without endpoints"),
        }
    }
    let boundary = boundary
        .into_iter()
        .map(|((v, side), (length_m, lanes, entry, exit))| BoundaryRecord {
            intersection: net.ids[v].to_string(),
            side,
            length_m,
            lanes,
            entry,
            exit,
        })
        .collect();
    RoadNetFile {
        intersections,
        approaches,
        boundary,
    }
}
