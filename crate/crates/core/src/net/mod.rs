//! Road-network model: intersections with compass slots, directed approaches,
//! lanes and the four signal phases.
//!
//! Boundary arms are carried as approaches with a virtual source or sink end.
//! They never appear in the intersection set, in neighborhoods, or in any of
//! the partitioning math.

mod file;
mod grid;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{ApproachRecord, BoundaryRecord, IntersectionRecord, RoadNetFile};
pub use grid::{make_cross, make_grid};

/// Maximum number of neighbors (and arms) of any intersection.
pub const MAX_DEGREE: usize = 4;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("unknown intersection `{0}`")]
    UnknownIntersection(String),
    #[error("duplicate intersection `{0}`")]
    DuplicateIntersection(String),
    #[error("intersection `{id}` has degree {degree}, at most 4 is supported")]
    DegreeExceeded { id: String, degree: usize },
    #[error("intersection `{0}` is connected to itself")]
    SelfLoop(String),
    #[error("slot mismatch: `{id}` has `{neighbor}` on its {side} side but `{neighbor}` does not have `{id}` on its {opposite} side")]
    AsymmetricSlot {
        id: String,
        neighbor: String,
        side: Side,
        opposite: Side,
    },
    #[error("approach `{from}` -> `{to}` does not follow a compass slot")]
    ApproachWithoutSlot { from: String, to: String },
    #[error("intersection `{id}` lists `{neighbor}` on its {side} side but no approach `{id}` -> `{neighbor}` exists")]
    MissingApproach {
        id: String,
        neighbor: String,
        side: Side,
    },
    #[error("duplicate approach `{from}` -> `{to}`")]
    DuplicateApproach { from: String, to: String },
    #[error("boundary arm `{id}:{side}` sits on a slot occupied by a neighbor")]
    BoundaryOnOccupiedSlot { id: String, side: Side },
    #[error("duplicate boundary arm `{id}:{side}`")]
    DuplicateBoundary { id: String, side: Side },
    #[error("invalid geometry on {what}: {reason}")]
    InvalidGeometry { what: String, reason: String },
    #[error("grid dimensions must be positive (rows={rows}, cols={cols}, lanes={lanes})")]
    NonPositiveDimension { rows: usize, cols: usize, lanes: usize },
    #[error("invalid arm `{0}`, expected `<intersection>:<N|E|S|W>`")]
    InvalidArm(String),
    #[error("cannot read road net {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse road net {path} (line {line}, column {column}): {source}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntersectionId(String);

impl IntersectionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// Grid label `row-col`, 1-based with row 1 on the north edge.
    pub fn grid(row: usize, col: usize) -> Self {
        Self(format!("{row}-{col}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IntersectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IntersectionId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Compass side of an intersection. Clockwise order N, E, S, W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    N,
    E,
    S,
    W,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::N, Side::E, Side::S, Side::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        Side::ALL[(self.index() + 2) % 4]
    }

    pub fn clockwise(self) -> Side {
        Side::ALL[(self.index() + 1) % 4]
    }

    pub fn counter_clockwise(self) -> Side {
        Side::ALL[(self.index() + 3) % 4]
    }

    /// Side through which a vehicle that entered from `self` leaves when
    /// performing `movement`.
    pub fn exit_side(self, movement: Movement) -> Side {
        match movement {
            Movement::Straight => self.opposite(),
            // Entering from the north means heading south; a left turn then
            // heads east.
            Movement::Left => self.clockwise(),
            Movement::Right => self.counter_clockwise(),
        }
    }

    pub fn is_north_south(self) -> bool {
        matches!(self, Side::N | Side::S)
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::N => "N",
            Side::E => "E",
            Side::S => "S",
            Side::W => "W",
        };
        f.write_str(s)
    }
}

impl FromStr for Side {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "N" => Ok(Side::N),
            "E" => Ok(Side::E),
            "S" => Ok(Side::S),
            "W" => Ok(Side::W),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Movement {
    Left,
    Straight,
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Left, Movement::Straight, Movement::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Signal phase. Right turns are permitted under every phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    NS,
    NSL,
    EW,
    EWL,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::NS, Phase::NSL, Phase::EW, Phase::EWL];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    /// Whether this phase controls (gives green to) the through/left
    /// movement. Right turns are not phase-controlled.
    pub fn controls(self, from: Side, movement: Movement) -> bool {
        match (self, movement) {
            (Phase::NS, Movement::Straight) | (Phase::NSL, Movement::Left) => from.is_north_south(),
            (Phase::EW, Movement::Straight) | (Phase::EWL, Movement::Left) => !from.is_north_south(),
            _ => false,
        }
    }

    pub fn permits(self, from: Side, movement: Movement) -> bool {
        movement == Movement::Right || self.controls(from, movement)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A boundary arm: the `side` of `intersection` that faces outside the network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arm {
    pub intersection: IntersectionId,
    pub side: Side,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.intersection, self.side)
    }
}

impl FromStr for Arm {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        let (id, side) = s
            .rsplit_once(':')
            .ok_or_else(|| NetError::InvalidArm(s.to_owned()))?;
        let side = side.parse().map_err(|_| NetError::InvalidArm(s.to_owned()))?;
        if id.is_empty() {
            return Err(NetError::InvalidArm(s.to_owned()));
        }
        Ok(Arm {
            intersection: IntersectionId::new(id),
            side,
        })
    }
}

impl Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Set of movements a lane serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MovementSet(u8);

impl MovementSet {
    pub fn with(self, m: Movement) -> Self {
        Self(self.0 | 1 << m.index())
    }

    pub fn contains(self, m: Movement) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Movement> {
        Movement::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// Lane-use pattern for lane `i` of an approach with `n` lanes: a single
    /// lane is shared by all movements; with two lanes the inner one serves
    /// left+through and the outer one through+right; with three or more the
    /// innermost is left-only, the outermost right-only, the rest through.
    pub fn for_lane(i: usize, n: usize) -> Self {
        let s = MovementSet::default();
        match n {
            1 => s.with(Movement::Left).with(Movement::Straight).with(Movement::Right),
            2 if i == 0 => s.with(Movement::Left).with(Movement::Straight),
            2 => s.with(Movement::Straight).with(Movement::Right),
            _ if i == 0 => s.with(Movement::Left),
            _ if i == n - 1 => s.with(Movement::Right),
            _ => s.with(Movement::Straight),
        }
    }
}

/// Directed road segment. `from == None` is a boundary source,
/// `to == None` a boundary sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Approach {
    pub from: Option<usize>,
    pub to: Option<usize>,
    /// Side of `to` through which the approach enters (None for sinks).
    pub enter_side: Option<Side>,
    /// Side of `from` through which the approach leaves (None for sources).
    pub leave_side: Option<Side>,
    pub length_m: f64,
    /// Global lane indices; empty for sinks.
    pub lanes: Vec<usize>,
    /// Declared lane count of a sink (sinks are not simulated lane by lane).
    pub sink_lanes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lane {
    pub approach: usize,
    pub index: usize,
    pub movements: MovementSet,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    ids: Vec<IntersectionId>,
    index: HashMap<IntersectionId, usize>,
    slots: Vec<[Option<usize>; 4]>,
    approaches: Vec<Approach>,
    incoming: Vec<[Option<usize>; 4]>,
    outgoing: Vec<[Option<usize>; 4]>,
    lanes: Vec<Lane>,
    entering: Vec<Vec<usize>>,
    entry_arms: Vec<(usize, Side)>,
}

impl RoadNetwork {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[IntersectionId] {
        &self.ids
    }

    pub fn id(&self, v: usize) -> &IntersectionId {
        &self.ids[v]
    }

    pub fn index_of(&self, id: &IntersectionId) -> Result<usize, NetError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| NetError::UnknownIntersection(id.to_string()))
    }

    /// Neighbor in compass slot `side`.
    pub fn slot(&self, v: usize, side: Side) -> Option<usize> {
        self.slots[v][side.index()]
    }

    pub fn slots(&self, v: usize) -> [Option<usize>; 4] {
        self.slots[v]
    }

    pub fn neighbor_indices(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.slots[v].iter().flatten().copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbor_indices(v).count()
    }

    /// Side of `v` on which `u` sits, if adjacent.
    pub fn side_of(&self, v: usize, u: usize) -> Option<Side> {
        Side::ALL.into_iter().find(|s| self.slots[v][s.index()] == Some(u))
    }

    pub fn are_adjacent(&self, v: usize, u: usize) -> bool {
        self.side_of(v, u).is_some()
    }

    /// NB_v as a set of ids.
    pub fn neighbors(&self, v: &IntersectionId) -> Result<BTreeSet<IntersectionId>, NetError> {
        let v = self.index_of(v)?;
        Ok(self.neighbor_indices(v).map(|u| self.ids[u].clone()).collect())
    }

    /// Breadth-first hop distances from `source`; `None` marks unreachable.
    pub fn hops_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for u in self.neighbor_indices(v) {
                if dist[u].is_none() {
                    dist[u] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Minimum hop count d(v, u); `Ok(None)` when u is unreachable from v.
    pub fn hop_distance(&self, v: &IntersectionId, u: &IntersectionId) -> Result<Option<usize>, NetError> {
        let v = self.index_of(v)?;
        let u = self.index_of(u)?;
        Ok(self.hops_from(v)[u])
    }

    pub fn approaches(&self) -> &[Approach] {
        &self.approaches
    }

    pub fn approach(&self, a: usize) -> &Approach {
        &self.approaches[a]
    }

    pub fn incoming(&self, v: usize, side: Side) -> Option<usize> {
        self.incoming[v][side.index()]
    }

    pub fn outgoing(&self, v: usize, side: Side) -> Option<usize> {
        self.outgoing[v][side.index()]
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, l: usize) -> &Lane {
        &self.lanes[l]
    }

    /// Lane[v]: entering lanes, ordered by side (N, E, S, W) then lane index.
    pub fn entering_lanes(&self, v: usize) -> &[usize] {
        &self.entering[v]
    }

    pub fn max_entering_lanes(&self) -> usize {
        self.entering.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Boundary arms where vehicles can enter, as (intersection, side).
    pub fn entry_arms(&self) -> &[(usize, Side)] {
        &self.entry_arms
    }

    pub fn arm(&self, v: usize, side: Side) -> Arm {
        Arm {
            intersection: self.ids[v].clone(),
            side,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        load_roadnet(path)
    }

    pub fn from_file(file: &RoadNetFile) -> Result<Self, NetError> {
        file::build(file)
    }

    pub fn to_file(&self) -> RoadNetFile {
        file::export(self)
    }
}

/// Read and validate a road-net JSON file.
pub fn load_roadnet(path: impl AsRef<Path>) -> Result<RoadNetwork, NetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: RoadNetFile = serde_json::from_str(&text).map_err(|source| NetError::Parse {
        path: path.display().to_string(),
        line: source.line(),
        column: source.column(),
        source,
    })?;
    RoadNetwork::from_file(&file)
}
