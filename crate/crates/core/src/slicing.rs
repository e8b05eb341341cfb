//! Network density control: slice plans, channel allocation, density
//! classification and live reconfiguration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{ConnectivityGraph, NodeId};

pub const MIN_CHANNEL: u8 = 11;
pub const MAX_CHANNEL: u8 = 26;
/// One physical slice per 2.4 GHz channel.
pub const MAX_PHYSICAL_SLICES: usize = (MAX_CHANNEL - MIN_CHANNEL + 1) as usize;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("node {node} assigned to multiple slices: {slices:?}")]
    DuplicateMembership { node: NodeId, slices: Vec<SliceId> },
    #[error("slice id {0} used more than once")]
    DuplicateSlice(SliceId),
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
    #[error("node {0} is not part of the topology")]
    UnknownNode(NodeId),
    #[error("{count} physical slices exceed the {MAX_PHYSICAL_SLICES}-channel capacity")]
    Capacity { count: usize },
    #[error("channel {channel} requested by both {first} and {second}")]
    ChannelConflict { channel: u8, first: SliceId, second: SliceId },
    #[error("channel {0} outside 11..=26")]
    ChannelRange(u8),
    #[error("slice {slice}: {reason}")]
    ChannelMode { slice: SliceId, reason: &'static str },
    #[error("slice {slice} does not contain its border router {router}")]
    BorderRouter { slice: SliceId, router: NodeId },
    #[error("non-sliced plan must have exactly one slice, found {0}")]
    NonSlicedShape(usize),
    #[error("operation requires physical mode")]
    NotPhysical,
}

impl PlanError {
    /// Machine-readable reason code for API clients.
    pub fn reason(&self) -> &'static str {
        match self {
            PlanError::DuplicateMembership { .. } => "duplicate-membership",
            PlanError::DuplicateSlice(_) => "duplicate-slice",
            PlanError::UnknownSlice(_) => "unknown-slice",
            PlanError::UnknownNode(_) => "unknown-node",
            PlanError::Capacity { .. } => "slice-capacity",
            PlanError::ChannelConflict { .. } => "channel-conflict",
            PlanError::ChannelRange(_) => "channel-range",
            PlanError::ChannelMode { .. } => "channel-mode",
            PlanError::BorderRouter { .. } => "border-router",
            PlanError::NonSlicedShape(_) => "non-sliced-shape",
            PlanError::NotPhysical => "mode",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SliceId(pub String);

impl SliceId {
    pub fn new(id: impl Into<String>) -> Self {
        SliceId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// IEEE 802.15.4 2.4 GHz channel number, always within `11..=26`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Channel(u8);

impl Channel {
    /// Channel used by every node when the network is not physically sliced.
    pub const DEFAULT: Channel = Channel(MAX_CHANNEL);

    pub fn new(number: u8) -> Result<Self, PlanError> {
        if (MIN_CHANNEL..=MAX_CHANNEL).contains(&number) {
            Ok(Channel(number))
        } else {
            Err(PlanError::ChannelRange(number))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Channel {
    type Error = PlanError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Channel::new(v)
    }
}

impl From<Channel> for u8 {
    fn from(c: Channel) -> u8 {
        c.0
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceMode {
    NonSliced,
    Logical,
    Physical,
}

impl SliceMode {
    pub const ALL: [SliceMode; 3] = [SliceMode::NonSliced, SliceMode::Logical, SliceMode::Physical];

    pub fn as_str(self) -> &'static str {
        match self {
            SliceMode::NonSliced => "non-sliced",
            SliceMode::Logical => "logical",
            SliceMode::Physical => "physical",
        }
    }
}

impl std::str::FromStr for SliceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SliceMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

impl fmt::Display for SliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub id: SliceId,
    #[serde(default)]
    pub members: BTreeSet<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Channel>,
    pub border_router: NodeId,
}

impl SliceSpec {
    pub fn new(id: &str, members: impl IntoIterator<Item = NodeId>, border_router: NodeId) -> Self {
        SliceSpec { id: SliceId::new(id), members: members.into_iter().collect(), channel: None, border_router }
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = Some(channel);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicePlan {
    pub mode: SliceMode,
    pub slices: Vec<SliceSpec>,
    pub default_slice: SliceId,
}

impl SlicePlan {
    /// A single slice holding every node, served by `border_router`.
    pub fn non_sliced(border_router: NodeId) -> Self {
        let id = SliceId::new("all");
        SlicePlan {
            mode: SliceMode::NonSliced,
            slices: vec![SliceSpec { id: id.clone(), members: BTreeSet::new(), channel: None, border_router }],
            default_slice: id,
        }
    }

    pub fn slice(&self, id: &SliceId) -> Option<&SliceSpec> {
        self.slices.iter().find(|s| &s.id == id)
    }

    fn slice_mut(&mut self, id: &SliceId) -> Option<&mut SliceSpec> {
        self.slices.iter_mut().find(|s| &s.id == id)
    }

    pub fn slice_of(&self, node: NodeId) -> Option<&SliceSpec> {
        self.slices.iter().find(|s| s.members.contains(&node))
    }

    pub fn border_routers(&self) -> BTreeSet<NodeId> {
        self.slices.iter().map(|s| s.border_router).collect()
    }

    /// Radio channel a node operates on under this plan.
    pub fn channel_of(&self, node: NodeId) -> Channel {
        match self.mode {
            SliceMode::Physical => self.slice_of(node).and_then(|s| s.channel).unwrap_or(Channel::DEFAULT),
            _ => Channel::DEFAULT,
        }
    }

    /// Checks every plan invariant against the node universe.
    pub fn validate(&self, all_nodes: &BTreeSet<NodeId>) -> Result<(), PlanError> {
        check_structure(self)?;
        let mut owner: BTreeMap<NodeId, &SliceId> = BTreeMap::new();
        for s in &self.slices {
            if !s.members.contains(&s.border_router) {
                return Err(PlanError::BorderRouter { slice: s.id.clone(), router: s.border_router });
            }
            for &m in &s.members {
                if !all_nodes.contains(&m) {
                    return Err(PlanError::UnknownNode(m));
                }
                if let Some(prev) = owner.insert(m, &s.id) {
                    return Err(PlanError::DuplicateMembership { node: m, slices: vec![prev.clone(), s.id.clone()] });
                }
            }
        }
        if let Some(&missing) = all_nodes.iter().find(|n| !owner.contains_key(n)) {
            return Err(PlanError::UnknownNode(missing));
        }
        check_channels(self)
    }
}

fn check_structure(plan: &SlicePlan) -> Result<(), PlanError> {
    let mut ids = BTreeSet::new();
    for s in &plan.slices {
        if !ids.insert(&s.id) {
            return Err(PlanError::DuplicateSlice(s.id.clone()));
        }
    }
    if !ids.contains(&plan.default_slice) {
        return Err(PlanError::UnknownSlice(plan.default_slice.clone()));
    }
    if plan.mode == SliceMode::NonSliced && plan.slices.len() != 1 {
        return Err(PlanError::NonSlicedShape(plan.slices.len()));
    }
    if plan.mode == SliceMode::Physical && plan.slices.len() > MAX_PHYSICAL_SLICES {
        return Err(PlanError::Capacity { count: plan.slices.len() });
    }
    Ok(())
}

fn check_channels(plan: &SlicePlan) -> Result<(), PlanError> {
    let mut used: BTreeMap<Channel, &SliceId> = BTreeMap::new();
    for s in &plan.slices {
        match (plan.mode, s.channel) {
            (SliceMode::Physical, None) => {
                return Err(PlanError::ChannelMode { slice: s.id.clone(), reason: "physical slice without a channel" })
            }
            (SliceMode::Physical, Some(c)) => {
                if let Some(first) = used.insert(c, &s.id) {
                    return Err(PlanError::ChannelConflict {
                        channel: c.number(),
                        first: first.clone(),
                        second: s.id.clone(),
                    });
                }
            }
            (_, Some(_)) => {
                return Err(PlanError::ChannelMode { slice: s.id.clone(), reason: "channel set outside physical mode" })
            }
            (_, None) => {}
        }
    }
    Ok(())
}

/// Completes an operator plan: each border router joins its slice and every
/// node not explicitly assigned falls into the default slice. Idempotent.
pub fn normalize_plan(plan: &SlicePlan, all_nodes: &BTreeSet<NodeId>) -> Result<SlicePlan, PlanError> {
    check_structure(plan)?;
    let mut owners: BTreeMap<NodeId, Vec<SliceId>> = BTreeMap::new();
    for s in &plan.slices {
        for &m in s.members.iter().chain(std::iter::once(&s.border_router)) {
            let list = owners.entry(m).or_default();
            if !list.contains(&s.id) {
                list.push(s.id.clone());
            }
        }
    }
    if let Some((&node, slices)) = owners.iter().find(|(_, v)| v.len() > 1) {
        return Err(PlanError::DuplicateMembership { node, slices: slices.clone() });
    }
    if let Some(&unknown) = owners.keys().find(|n| !all_nodes.contains(n)) {
        return Err(PlanError::UnknownNode(unknown));
    }

    let mut out = plan.clone();
    for s in &mut out.slices {
        s.members.insert(s.border_router);
    }
    let unassigned: Vec<NodeId> = all_nodes.iter().copied().filter(|n| !owners.contains_key(n)).collect();
    let default = out.slice_mut(&plan.default_slice).expect("default slice checked above");
    default.members.extend(unassigned);
    Ok(out)
}

/// Induced slice graphs: each slice's members (its border router included).
pub fn partition(g: &ConnectivityGraph, plan: &SlicePlan) -> BTreeMap<SliceId, ConnectivityGraph> {
    plan.slices
        .iter()
        .map(|s| {
            let mut keep = s.members.clone();
            keep.insert(s.border_router);
            (s.id.clone(), g.induced(&keep))
        })
        .collect()
}

/// Gives every slice of a physical plan a distinct channel.
///
/// Explicit requests win, then channels already on the plan; the rest are
/// filled with the lowest free channel in ascending slice order.
pub fn assign_channels(plan: &SlicePlan, requested: Option<&BTreeMap<SliceId, u8>>) -> Result<SlicePlan, PlanError> {
    if plan.mode != SliceMode::Physical {
        return Err(PlanError::NotPhysical);
    }
    if plan.slices.len() > MAX_PHYSICAL_SLICES {
        return Err(PlanError::Capacity { count: plan.slices.len() });
    }
    let mut wanted: BTreeMap<SliceId, Channel> = BTreeMap::new();
    for s in &plan.slices {
        if let Some(c) = s.channel {
            wanted.insert(s.id.clone(), c);
        }
    }
    if let Some(req) = requested {
        for (id, &raw) in req {
            if plan.slice(id).is_none() {
                return Err(PlanError::UnknownSlice(id.clone()));
            }
            wanted.insert(id.clone(), Channel::new(raw)?);
        }
    }
    let mut taken: BTreeMap<Channel, SliceId> = BTreeMap::new();
    for s in &plan.slices {
        if let Some(&c) = wanted.get(&s.id) {
            if let Some(first) = taken.insert(c, s.id.clone()) {
                return Err(PlanError::ChannelConflict { channel: c.number(), first, second: s.id.clone() });
            }
        }
    }
    let mut out = plan.clone();
    let mut free = (MIN_CHANNEL..=MAX_CHANNEL).map(Channel).filter(|c| !taken.contains_key(c));
    for s in &mut out.slices {
        s.channel = match wanted.get(&s.id) {
            Some(&c) => Some(c),
            None => Some(free.next().ok_or(PlanError::Capacity { count: plan.slices.len() })?),
        };
    }
    Ok(out)
}

/// Traffic-light adjacency tiers, least to most loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Green,
    Yellow,
    Amber,
    Red,
}

impl Tier {
    pub fn from_percentile(p: f64) -> Tier {
        if p >= 0.90 {
            Tier::Red
        } else if p >= 0.70 {
            Tier::Amber
        } else if p >= 0.40 {
            Tier::Yellow
        } else {
            Tier::Green
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityClass {
    pub tier: Tier,
    pub degree: usize,
    pub adjacency_percentile: f64,
}

/// Classifies nodes by the percentile rank of their degree.
///
/// A node's rank is the fraction of the other classified nodes with a strictly
/// lower degree, so ties share the lowest rank. Nodes in `exclude` (border
/// routers) are neither classified nor counted.
pub fn classify_density(g: &ConnectivityGraph, exclude: &BTreeSet<NodeId>) -> BTreeMap<NodeId, DensityClass> {
    let mut degrees: Vec<(NodeId, usize)> =
        g.nodes().filter(|n| !exclude.contains(n)).map(|n| (n, g.degree(n))).collect();
    let population = degrees.len();
    let mut sorted: Vec<usize> = degrees.iter().map(|&(_, d)| d).collect();
    sorted.sort_unstable();
    degrees
        .drain(..)
        .map(|(n, degree)| {
            let below = sorted.partition_point(|&d| d < degree);
            let p = if population > 1 { below as f64 / (population - 1) as f64 } else { 0.0 };
            (n, DensityClass { tier: Tier::from_percentile(p), degree, adjacency_percentile: p })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMove {
    pub node: NodeId,
    pub to: SliceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRetune {
    pub slice: SliceId,
    pub channel: u8,
}

/// Membership and channel changes applied as one unit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDelta {
    #[serde(default)]
    pub moves: Vec<NodeMove>,
    #[serde(default)]
    pub retunes: Vec<ChannelRetune>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovedNode {
    pub node: NodeId,
    pub from: SliceId,
    pub to: SliceId,
}

/// What changed between two plans; consumed by the controller and simulator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigurationEvent {
    pub moved: Vec<MovedNode>,
    pub retuned: Vec<SliceId>,
    pub affected: BTreeSet<SliceId>,
    pub plan: SlicePlan,
}

impl ReconfigurationEvent {
    /// Compares two normalized plans.
    pub fn between(old: &SlicePlan, new: &SlicePlan) -> Self {
        let mut moved = Vec::new();
        let mut affected = BTreeSet::new();
        for s in &new.slices {
            for &n in &s.members {
                match old.slice_of(n) {
                    Some(prev) if prev.id == s.id => {}
                    Some(prev) => {
                        moved.push(MovedNode { node: n, from: prev.id.clone(), to: s.id.clone() });
                        affected.insert(prev.id.clone());
                        affected.insert(s.id.clone());
                    }
                    None => {
                        affected.insert(s.id.clone());
                    }
                }
            }
        }
        let mut retuned = Vec::new();
        for s in &new.slices {
            let before = old.slice(&s.id);
            if before.map(|b| b.channel) != Some(s.channel) || old.mode != new.mode {
                retuned.push(s.id.clone());
                affected.insert(s.id.clone());
            }
            if before.is_none_or(|b| b.border_router != s.border_router) {
                affected.insert(s.id.clone());
            }
        }
        moved.sort_by_key(|m| m.node);
        ReconfigurationEvent { moved, retuned, affected, plan: new.clone() }
    }
}

/// Applies `delta` to a copy of `plan`; on any violation the input is untouched.
pub fn apply_reconfiguration(
    plan: &SlicePlan,
    delta: &PlanDelta,
    all_nodes: &BTreeSet<NodeId>,
) -> Result<(SlicePlan, ReconfigurationEvent), PlanError> {
    let mut next = plan.clone();
    for mv in &delta.moves {
        if !all_nodes.contains(&mv.node) {
            return Err(PlanError::UnknownNode(mv.node));
        }
        if next.slice(&mv.to).is_none() {
            return Err(PlanError::UnknownSlice(mv.to.clone()));
        }
        for s in &mut next.slices {
            s.members.remove(&mv.node);
        }
        next.slice_mut(&mv.to).expect("checked").members.insert(mv.node);
    }
    for rt in &delta.retunes {
        if next.mode != SliceMode::Physical {
            return Err(PlanError::NotPhysical);
        }
        let channel = Channel::new(rt.channel)?;
        next.slice_mut(&rt.slice).ok_or_else(|| PlanError::UnknownSlice(rt.slice.clone()))?.channel = Some(channel);
    }
    // A border router moved away must not be silently re-added by normalization.
    for s in &next.slices {
        if !s.members.contains(&s.border_router) {
            return Err(PlanError::BorderRouter { slice: s.id.clone(), router: s.border_router });
        }
    }
    let next = normalize_plan(&next, all_nodes)?;
    next.validate(all_nodes)?;
    let event = ReconfigurationEvent::between(plan, &next);
    Ok((next, event))
}
