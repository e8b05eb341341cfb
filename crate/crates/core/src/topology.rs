//! Node placement and radio connectivity.
//!
//! Placements are deterministic functions of their inputs. Connectivity follows
//! the unit-disk model: two nodes are neighbors iff their Euclidean distance is
//! within the communication range.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance applied to range comparisons so that lattice distances computed
/// with floating point (e.g. `3 * 4.5`) do not fall off the disk edge.
const RANGE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
}

/// Network-wide node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        if !(self.x.is_finite() && self.y.is_finite()) || self.x < 0.0 || self.y < 0.0 {
            return Err(TopologyError::InvalidConfig(format!(
                "position ({}, {}) must be finite and non-negative",
                self.x, self.y
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Sensor,
    BorderRouter,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Sensor => "sensor",
            Role::BorderRouter => "border-router",
        }
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensor" => Ok(Role::Sensor),
            "border-router" => Ok(Role::BorderRouter),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// A sensor or border-router mote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub position: Position,
    pub role: Role,
    pub category: String,
}

impl NodeRecord {
    pub fn sensor(id: u32, position: Position, category: &str) -> Self {
        NodeRecord { id: NodeId(id), position, role: Role::Sensor, category: category.to_string() }
    }

    pub fn border_router(id: u32, position: Position) -> Self {
        NodeRecord {
            id: NodeId(id),
            position,
            role: Role::BorderRouter,
            category: "border-router".to_string(),
        }
    }

    pub fn is_border_router(&self) -> bool {
        self.role == Role::BorderRouter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

fn check_spacing(count: usize, spacing: f64, origin: &Position) -> Result<(), TopologyError> {
    if count == 0 {
        return Err(TopologyError::InvalidConfig("node count must be at least 1".into()));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(TopologyError::InvalidConfig(format!("spacing must be positive, got {spacing}")));
    }
    origin.validate()
}

/// Row-major near-square grid: `ceil(sqrt(count))` rows, columns filled first.
/// Ids run from 0; use [`relabel`] to place the grid inside a larger layout.
pub fn build_grid(count: usize, spacing: f64, origin: Position) -> Result<Vec<NodeRecord>, TopologyError> {
    check_spacing(count, spacing, &origin)?;
    let rows = (count as f64).sqrt().ceil() as usize;
    let cols = count.div_ceil(rows);
    Ok((0..count)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            let position = Position::new(origin.x + col as f64 * spacing, origin.y + row as f64 * spacing);
            NodeRecord::sensor(i as u32, position, "grid")
        })
        .collect())
}

/// Collinear, equally spaced nodes along `axis`.
pub fn build_linear(
    count: usize,
    spacing: f64,
    origin: Position,
    axis: Axis,
) -> Result<Vec<NodeRecord>, TopologyError> {
    check_spacing(count, spacing, &origin)?;
    Ok((0..count)
        .map(|i| {
            let offset = i as f64 * spacing;
            let position = match axis {
                Axis::X => Position::new(origin.x + offset, origin.y),
                Axis::Y => Position::new(origin.x, origin.y + offset),
            };
            NodeRecord::sensor(i as u32, position, "linear")
        })
        .collect())
}

/// Renumbers nodes consecutively from `first_id` and stamps their category.
pub fn relabel(nodes: Vec<NodeRecord>, first_id: u32, category: &str) -> Vec<NodeRecord> {
    nodes
        .into_iter()
        .enumerate()
        .map(|(i, mut n)| {
            n.id = NodeId(first_id + i as u32);
            n.category = category.to_string();
            n
        })
        .collect()
}

/// Undirected, loop-free adjacency over node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConnectivityGraph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl ConnectivityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId) {
        self.adjacency.entry(id).or_default();
    }

    /// Adds the undirected edge `u - v`. Self-loops are ignored.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId) {
        if u == v {
            return;
        }
        self.adjacency.entry(u).or_default().insert(v);
        self.adjacency.entry(v).or_default().insert(u);
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) {
        if let Some(n) = self.adjacency.get_mut(&u) {
            n.remove(&v);
        }
        if let Some(n) = self.adjacency.get_mut(&v) {
            n.remove(&u);
        }
    }

    /// Removes a node together with all incident edges.
    pub fn remove_node(&mut self, id: NodeId) {
        if let Some(neighbors) = self.adjacency.remove(&id) {
            for n in neighbors {
                if let Some(set) = self.adjacency.get_mut(&n) {
                    set.remove(&id);
                }
            }
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.adjacency.contains_key(&id)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency.get(&u).is_some_and(|n| n.contains(&v))
    }

    /// Neighbors in ascending id order. Unknown nodes have none.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flat_map(|n| n.iter().copied())
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Each undirected edge once, as `(low, high)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&u, ns)| ns.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Sub-graph induced by `keep`; ids in `keep` absent from the graph are ignored.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> ConnectivityGraph {
        let adjacency = self
            .adjacency
            .iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(&id, ns)| (id, ns.intersection(keep).copied().collect()))
            .collect();
        ConnectivityGraph { adjacency }
    }
}

/// Unit-disk connectivity: an edge for every pair within `comm_range` meters.
pub fn derive_connectivity(nodes: &[NodeRecord], comm_range: f64) -> ConnectivityGraph {
    let mut g = ConnectivityGraph::new();
    for n in nodes {
        g.add_node(n.id);
    }
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if in_range(&a.position, &b.position, comm_range) {
                g.add_edge(a.id, b.id);
            }
        }
    }
    g
}

pub fn in_range(a: &Position, b: &Position, range: f64) -> bool {
    a.distance(b) <= range + RANGE_EPSILON
}

pub fn max_neighbor_count(g: &ConnectivityGraph) -> usize {
    g.nodes().map(|n| g.degree(n)).max().unwrap_or(0)
}

/// The five density presets of the arena deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Medium,
    Dense,
    High,
    Extra,
    Ultra,
}

impl Density {
    /// Sparsest first.
    pub const ALL: [Density; 5] = [Density::Medium, Density::Dense, Density::High, Density::Extra, Density::Ultra];

    pub fn scenario(self) -> DensityScenario {
        let (spacing, side, expected_max_neighbors) = match self {
            Density::Ultra => (1.0, 10.0, 96),
            Density::Extra => (2.0, 20.0, 69),
            Density::High => (3.0, 30.0, 36),
            Density::Dense => (4.0, 40.0, 20),
            Density::Medium => (4.5, 45.0, 12),
        };
        DensityScenario { density: self, spacing, area: (side, side), expected_max_neighbors }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Density::Medium => "medium",
            Density::Dense => "dense",
            Density::High => "high",
            Density::Extra => "extra",
            Density::Ultra => "ultra",
        }
    }
}

impl FromStr for Density {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Density::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown density {s:?}"))
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityScenario {
    pub density: Density,
    /// Inter-node distance in meters.
    pub spacing: f64,
    /// Deployment area (width, height) in meters.
    pub area: (f64, f64),
    pub expected_max_neighbors: usize,
}

/// Effective communication range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RangePreset {
    /// The nominal 25 m radio range.
    #[default]
    Nominal,
    /// 10 m, which reproduces the listed neighbor counts for most presets.
    Table1Calibrated,
    Custom(f64),
}

impl RangePreset {
    pub fn meters(self) -> f64 {
        match self {
            RangePreset::Nominal => 25.0,
            RangePreset::Table1Calibrated => 10.0,
            RangePreset::Custom(m) => m,
        }
    }
}

/// Writes the line-oriented topology format: `node <id> <x> <y> <role> <category>`.
pub fn export_topology(nodes: &[NodeRecord]) -> String {
    let mut out = String::new();
    for n in nodes {
        out.push_str(&format!(
            "node {} {} {} {} {}\n",
            n.id,
            n.position.x,
            n.position.y,
            n.role.as_str(),
            n.category
        ));
    }
    out
}

/// Parses the format produced by [`export_topology`]. Blank lines and `#` comments are skipped.
pub fn import_topology(text: &str) -> Result<Vec<NodeRecord>, TopologyError> {
    let mut nodes = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| TopologyError::Parse { line: i + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "node" {
            return Err(err(format!("expected `node <id> <x> <y> <role> <category>`, got {line:?}")));
        }
        let id: NodeId = fields[1].parse().map_err(|e| err(format!("bad id: {e}")))?;
        let x: f64 = fields[2].parse().map_err(|e| err(format!("bad x: {e}")))?;
        let y: f64 = fields[3].parse().map_err(|e| err(format!("bad y: {e}")))?;
        let role: Role = fields[4].parse().map_err(err)?;
        let position = Position::new(x, y);
        position.validate().map_err(|e| err(e.to_string()))?;
        if !seen.insert(id) {
            return Err(TopologyError::DuplicateNode(id));
        }
        nodes.push(NodeRecord { id, position, role, category: fields[5].to_string() });
    }
    Ok(nodes)
}

/// Sensors of the arena deployment: a 76-seat grid of chairs and a 21-node
/// linear corridor, plus one border router per slice.
#[derive(Debug, Clone)]
pub struct ArenaLayout {
    pub nodes: Vec<NodeRecord>,
    pub chairs: BTreeSet<NodeId>,
    pub corridor: BTreeSet<NodeId>,
    /// Border router for the corridor slice; the only router when unsliced.
    pub corridor_router: NodeId,
    /// Border router for the chair slice, present only with two routers.
    pub chair_router: Option<NodeId>,
}

pub const ARENA_CHAIRS: usize = 76;
pub const ARENA_CORRIDOR: usize = 21;

impl ArenaLayout {
    /// Builds the arena at `spacing` meters.
    ///
    /// Ids: chairs `0..76`, corridor `76..97`, corridor router `97`, chair router `98`.
    /// The corridor runs along `y = spacing`, the chair block sits above it
    /// centered on the corridor, and the main router sits at the middle of the
    /// south edge. The chair router, when present, sits at the middle of the
    /// chair block's north edge.
    pub fn build(spacing: f64, two_routers: bool) -> Result<Self, TopologyError> {
        let corridor_span = (ARENA_CORRIDOR - 1) as f64 * spacing;
        let grid_cols = {
            let rows = (ARENA_CHAIRS as f64).sqrt().ceil() as usize;
            ARENA_CHAIRS.div_ceil(rows)
        };
        let grid_width = (grid_cols - 1) as f64 * spacing;
        let grid_origin = Position::new((corridor_span - grid_width) / 2.0, 2.0 * spacing);
        let chairs = relabel(build_grid(ARENA_CHAIRS, spacing, grid_origin)?, 0, "chair");
        let corridor = relabel(
            build_linear(ARENA_CORRIDOR, spacing, Position::new(0.0, spacing), Axis::X)?,
            ARENA_CHAIRS as u32,
            "corridor",
        );
        let grid_top = chairs.iter().map(|n| n.position.y).fold(0.0, f64::max);

        let mut nodes = Vec::with_capacity(ARENA_CHAIRS + ARENA_CORRIDOR + 2);
        let chair_ids = chairs.iter().map(|n| n.id).collect();
        let corridor_ids = corridor.iter().map(|n| n.id).collect();
        nodes.extend(chairs);
        nodes.extend(corridor);
        let corridor_router = NodeId((ARENA_CHAIRS + ARENA_CORRIDOR) as u32);
        nodes.push(NodeRecord::border_router(corridor_router.0, Position::new(corridor_span / 2.0, 0.0)));
        let chair_router = if two_routers {
            let id = corridor_router.0 + 1;
            nodes.push(NodeRecord::border_router(id, Position::new(corridor_span / 2.0, grid_top + spacing)));
            Some(NodeId(id))
        } else {
            None
        };
        Ok(ArenaLayout { nodes, chairs: chair_ids, corridor: corridor_ids, corridor_router, chair_router })
    }

    pub fn sensor_count(&self) -> usize {
        self.chairs.len() + self.corridor.len()
    }
}
