//! Control plane: per-slice network models, hop-count routing and flow tables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codet::{self, CheckScheduler, CodetError, ConnectivityReport, Strategy};
use crate::slicing::{
    self, apply_reconfiguration, assign_channels, normalize_plan, partition, Channel, DensityClass, PlanDelta, PlanError,
    ReconfigurationEvent, SliceId, SliceMode, SlicePlan,
};
use crate::time::SimTime;
use crate::topology::{derive_connectivity, ConnectivityGraph, NodeId, NodeRecord};

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RouteError {
    #[error("node {node} is not a sensor of any slice")]
    UnknownSource { node: NodeId },
    #[error("no path from {node} to the border router of slice {slice}; disconnected: {disconnected:?}")]
    Unavailable { node: NodeId, slice: SliceId, disconnected: Vec<NodeId> },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("rule at {node} points to {next_hop}, which is not a radio neighbor")]
    NotNeighbor { node: NodeId, next_hop: NodeId },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ControllerError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Codet(#[from] CodetError),
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
}

impl ControllerError {
    pub fn reason(&self) -> &'static str {
        match self {
            ControllerError::Plan(e) => e.reason(),
            ControllerError::Flow(_) => "flow-consistency",
            ControllerError::Codet(CodetError::ZeroInterval) => "interval",
            ControllerError::Codet(CodetError::UnknownNode(_)) => "unknown-node",
            ControllerError::UnknownSlice(_) => "unknown-slice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRule {
    pub node: NodeId,
    pub match_destination: NodeId,
    pub action_next_hop: NodeId,
    pub slice_id: SliceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub source: NodeId,
    pub destination: NodeId,
    pub slice_id: SliceId,
    /// Source first, destination last.
    pub hops: Vec<NodeId>,
}

impl Route {
    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }
}

/// BFS hop distance from every reachable node to `target`.
pub fn hop_distances(g: &ConnectivityGraph, target: NodeId) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::new();
    if !g.contains(target) {
        return dist;
    }
    dist.insert(target, 0);
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for v in g.neighbors(u) {
            dist.entry(v).or_insert_with(|| {
                queue.push_back(v);
                d + 1
            });
        }
    }
    dist
}

fn walk_down(g: &ConnectivityGraph, dist: &BTreeMap<NodeId, usize>, source: NodeId, target: NodeId) -> Vec<NodeId> {
    let mut hops = vec![source];
    let mut current = source;
    while current != target {
        let want = dist[&current] - 1;
        // neighbors iterate in ascending id order
        current = g.neighbors(current).find(|n| dist.get(n) == Some(&want)).expect("BFS layer has a predecessor");
        hops.push(current);
    }
    hops
}

/// Minimum-hop route from `source` to its slice's border router inside the slice
/// graph. Among equal-length paths, each step takes the lowest-id neighbor.
pub fn compute_route(
    plan: &SlicePlan,
    slice_graphs: &BTreeMap<SliceId, ConnectivityGraph>,
    source: NodeId,
) -> Result<Route, RouteError> {
    let slice = plan.slice_of(source).ok_or(RouteError::UnknownSource { node: source })?;
    if source == slice.border_router {
        return Err(RouteError::UnknownSource { node: source });
    }
    let g = slice_graphs.get(&slice.id).ok_or(RouteError::UnknownSource { node: source })?;
    let dist = hop_distances(g, slice.border_router);
    route_with(g, &dist, slice.id.clone(), source, slice.border_router)
}

fn route_with(
    g: &ConnectivityGraph,
    dist: &BTreeMap<NodeId, usize>,
    slice: SliceId,
    source: NodeId,
    target: NodeId,
) -> Result<Route, RouteError> {
    if !dist.contains_key(&source) {
        let disconnected = codet::detect(g, target, Strategy::ReverseBfs).unwrap_or_default();
        return Err(RouteError::Unavailable { node: source, slice, disconnected });
    }
    Ok(Route { source, destination: target, slice_id: slice, hops: walk_down(g, dist, source, target) })
}

/// Per-node forwarding rules keyed by destination.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTables {
    tables: BTreeMap<NodeId, BTreeMap<NodeId, FlowRule>>,
}

impl FlowTables {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs `rule`, replacing any rule for the same (node, destination).
    pub fn install(&mut self, rule: FlowRule) {
        self.tables.entry(rule.node).or_default().insert(rule.match_destination, rule);
    }

    pub fn lookup(&self, node: NodeId, destination: NodeId) -> Option<&FlowRule> {
        self.tables.get(&node)?.get(&destination)
    }

    pub fn next_hop(&self, node: NodeId, destination: NodeId) -> Option<NodeId> {
        self.lookup(node, destination).map(|r| r.action_next_hop)
    }

    pub fn rules_at(&self, node: NodeId) -> impl Iterator<Item = &FlowRule> {
        self.tables.get(&node).into_iter().flat_map(|t| t.values())
    }

    pub fn rules(&self) -> impl Iterator<Item = &FlowRule> {
        self.tables.values().flat_map(|t| t.values())
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&FlowRule) -> bool) {
        for t in self.tables.values_mut() {
            t.retain(|_, r| keep(r));
        }
        self.tables.retain(|_, t| !t.is_empty());
    }

    pub fn as_map(&self) -> BTreeMap<NodeId, Vec<FlowRule>> {
        self.tables.iter().map(|(&n, t)| (n, t.values().cloned().collect())).collect()
    }
}

/// Turns routes into per-relay rules, in order; later routes overwrite.
pub fn install_flows(routes: &[Route], g: &ConnectivityGraph) -> Result<FlowTables, FlowError> {
    let mut tables = FlowTables::new();
    for route in routes {
        for pair in route.hops.windows(2) {
            let (node, next_hop) = (pair[0], pair[1]);
            if !g.has_edge(node, next_hop) {
                return Err(FlowError::NotNeighbor { node, next_hop });
            }
            tables.install(FlowRule {
                node,
                match_destination: route.destination,
                action_next_hop: next_hop,
                slice_id: route.slice_id.clone(),
            });
        }
    }
    Ok(tables)
}

/// Radio channel change for one node, delivered over the control channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetuneDirective {
    pub node: NodeId,
    pub channel: Channel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigOutcome {
    pub changed_routes: Vec<NodeId>,
    pub unavailable: Vec<RouteError>,
    pub retunes: Vec<RetuneDirective>,
}

/// Immutable view used to answer route misses from the data plane.
#[derive(Debug, Clone)]
pub struct RoutingSnapshot {
    plan: SlicePlan,
    slice_graphs: BTreeMap<SliceId, ConnectivityGraph>,
}

impl RoutingSnapshot {
    /// Next hop from `node` towards `destination`, confined to `node`'s slice.
    pub fn resolve(&self, node: NodeId, destination: NodeId) -> Option<NodeId> {
        let slice = self.plan.slice_of(node)?;
        if slice.border_router != destination {
            return None;
        }
        let route = compute_route(&self.plan, &self.slice_graphs, node).ok()?;
        route.hops.get(1).copied()
    }
}

/// Controller state for one deployment.
#[derive(Debug, Clone)]
pub struct Controller {
    nodes: Vec<NodeRecord>,
    all_nodes: BTreeSet<NodeId>,
    graph: ConnectivityGraph,
    plan: SlicePlan,
    slice_graphs: BTreeMap<SliceId, ConnectivityGraph>,
    routes: BTreeMap<NodeId, Route>,
    unavailable: BTreeMap<NodeId, RouteError>,
    flows: FlowTables,
    codet: CheckScheduler,
}

impl Controller {
    /// Discovers connectivity from node geometry, validates the plan and
    /// proactively installs a route for every sensor.
    pub fn new(nodes: Vec<NodeRecord>, comm_range: f64, plan: &SlicePlan) -> Result<Self, ControllerError> {
        let graph = derive_connectivity(&nodes, comm_range);
        Self::with_graph(nodes, graph, plan)
    }

    pub fn with_graph(nodes: Vec<NodeRecord>, graph: ConnectivityGraph, plan: &SlicePlan) -> Result<Self, ControllerError> {
        let all_nodes: BTreeSet<NodeId> = nodes.iter().map(|n| n.id).collect();
        let plan = prepare_plan(plan, &all_nodes)?;
        let mut c = Controller {
            nodes,
            all_nodes,
            graph,
            slice_graphs: BTreeMap::new(),
            plan,
            routes: BTreeMap::new(),
            unavailable: BTreeMap::new(),
            flows: FlowTables::new(),
            codet: CheckScheduler::new(codet::DEFAULT_CHECK_INTERVAL)?,
        };
        c.rebuild()?;
        Ok(c)
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn graph(&self) -> &ConnectivityGraph {
        &self.graph
    }

    pub fn plan(&self) -> &SlicePlan {
        &self.plan
    }

    pub fn slice_graphs(&self) -> &BTreeMap<SliceId, ConnectivityGraph> {
        &self.slice_graphs
    }

    pub fn routes(&self) -> &BTreeMap<NodeId, Route> {
        &self.routes
    }

    pub fn unavailable(&self) -> &BTreeMap<NodeId, RouteError> {
        &self.unavailable
    }

    pub fn flows(&self) -> &FlowTables {
        &self.flows
    }

    pub fn sensors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| !n.is_border_router()).map(|n| n.id)
    }

    pub fn routing_snapshot(&self) -> RoutingSnapshot {
        RoutingSnapshot { plan: self.plan.clone(), slice_graphs: self.slice_graphs.clone() }
    }

    fn rebuild(&mut self) -> Result<(), ControllerError> {
        self.slice_graphs = partition(&self.graph, &self.plan);
        let routers = self.plan.border_routers();
        let mut routes = BTreeMap::new();
        let mut unavailable = BTreeMap::new();
        for slice in &self.plan.slices {
            let g = &self.slice_graphs[&slice.id];
            let dist = hop_distances(g, slice.border_router);
            for &n in slice.members.iter().filter(|n| !routers.contains(n)) {
                match route_with(g, &dist, slice.id.clone(), n, slice.border_router) {
                    Ok(r) => {
                        routes.insert(n, r);
                    }
                    Err(e) => {
                        unavailable.insert(n, e);
                    }
                }
            }
        }
        let ordered: Vec<Route> = routes.values().cloned().collect();
        self.flows = install_flows(&ordered, &self.graph)?;
        self.routes = routes;
        self.unavailable = unavailable;
        for e in self.unavailable.values() {
            log::warn!("{e}");
        }
        Ok(())
    }

    /// Applies a reconfiguration event: rebuilds slice graphs, recomputes
    /// routes, drops stale rules and emits channel retunes for physical mode.
    pub fn on_reconfiguration(&mut self, event: &ReconfigurationEvent) -> Result<ReconfigOutcome, ControllerError> {
        let old_plan = std::mem::replace(&mut self.plan, event.plan.clone());
        let old_routes = std::mem::take(&mut self.routes);
        if let Err(e) = self.rebuild() {
            self.plan = old_plan;
            self.routes = old_routes;
            self.rebuild()?;
            return Err(e);
        }
        let mut changed_routes: Vec<NodeId> = self
            .routes
            .iter()
            .filter(|(n, r)| old_routes.get(n) != Some(r))
            .map(|(&n, _)| n)
            .chain(old_routes.keys().filter(|n| !self.routes.contains_key(n)).copied())
            .collect();
        changed_routes.sort();
        changed_routes.dedup();
        let retunes = self
            .all_nodes
            .iter()
            .filter_map(|&n| {
                let (before, after) = (old_plan.channel_of(n), self.plan.channel_of(n));
                (before != after).then_some(RetuneDirective { node: n, channel: after })
            })
            .collect();
        Ok(ReconfigOutcome { changed_routes, unavailable: self.unavailable.values().cloned().collect(), retunes })
    }

    /// Replaces the whole plan atomically.
    pub fn set_plan(&mut self, plan: &SlicePlan) -> Result<ReconfigOutcome, ControllerError> {
        let next = prepare_plan(plan, &self.all_nodes)?;
        let event = ReconfigurationEvent::between(&self.plan, &next);
        self.on_reconfiguration(&event)
    }

    pub fn apply_delta(&mut self, delta: &PlanDelta) -> Result<(ReconfigurationEvent, ReconfigOutcome), ControllerError> {
        let (_, event) = apply_reconfiguration(&self.plan, delta, &self.all_nodes)?;
        let outcome = self.on_reconfiguration(&event)?;
        Ok((event, outcome))
    }

    /// Reactive flow establishment for a packet-in at `node`.
    pub fn handle_route_miss(&mut self, node: NodeId, destination: NodeId) -> Option<FlowRule> {
        let next_hop = self.routing_snapshot().resolve(node, destination)?;
        let rule = FlowRule {
            node,
            match_destination: destination,
            action_next_hop: next_hop,
            slice_id: self.plan.slice_of(node)?.id.clone(),
        };
        self.flows.install(rule.clone());
        Some(rule)
    }

    pub fn density(&self) -> BTreeMap<NodeId, DensityClass> {
        slicing::classify_density(&self.graph, &self.plan.border_routers())
    }

    fn codet_inputs(&self) -> BTreeMap<SliceId, (ConnectivityGraph, NodeId)> {
        self.plan
            .slices
            .iter()
            .map(|s| (s.id.clone(), (self.slice_graphs[&s.id].clone(), s.border_router)))
            .collect()
    }

    /// Runs the connectivity check for one slice now.
    pub fn run_codet(&mut self, slice: &SliceId, at: SimTime) -> Result<ConnectivityReport, ControllerError> {
        let entry = self.plan.slice(slice).ok_or_else(|| ControllerError::UnknownSlice(slice.clone()))?;
        let report = ConnectivityReport::check(
            slice.clone(),
            &self.slice_graphs[slice],
            entry.border_router,
            at,
            Strategy::ReverseBfs,
        )?;
        Ok(self.codet.record(report))
    }

    /// Runs any periodic checks due by `now`.
    pub fn poll_codet(&mut self, now: SimTime) -> Result<Vec<ConnectivityReport>, ControllerError> {
        let inputs = self.codet_inputs();
        Ok(self.codet.poll(now, &inputs)?)
    }

    pub fn set_codet_interval(&mut self, interval: Duration) -> Result<(), ControllerError> {
        Ok(self.codet.set_interval(interval)?)
    }

    pub fn codet(&self) -> &CheckScheduler {
        &self.codet
    }

    /// Removes a node from the radio graph (e.g. a failed mote) and re-plans routes.
    pub fn fail_node(&mut self, node: NodeId) -> Result<ReconfigOutcome, ControllerError> {
        self.graph.remove_node(node);
        self.graph.add_node(node);
        let event = ReconfigurationEvent::between(&self.plan, &self.plan.clone());
        self.on_reconfiguration(&event)
    }
}

/// Normalizes and validates an operator plan, filling channels in physical mode.
pub fn prepare_plan(plan: &SlicePlan, all_nodes: &BTreeSet<NodeId>) -> Result<SlicePlan, PlanError> {
    let mut plan = normalize_plan(plan, all_nodes)?;
    if plan.mode == SliceMode::Physical {
        plan = assign_channels(&plan, None)?;
    }
    plan.validate(all_nodes)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::SliceSpec;
    use crate::topology::{build_linear, Axis, Position};

    fn chain_controller(n: usize) -> Controller {
        let mut nodes = build_linear(n, 10.0, Position::ORIGIN, Axis::X).unwrap();
        nodes[0].role = crate::topology::Role::BorderRouter;
        Controller::new(nodes, 12.0, &SlicePlan::non_sliced(NodeId(0))).unwrap()
    }

    #[test]
    fn chain_route_walks_every_node() {
        let c = chain_controller(21);
        let r = &c.routes()[&NodeId(20)];
        assert_eq!(r.hop_count(), 20);
        assert_eq!(r.hops, (0..=20).rev().map(NodeId).collect::<Vec<_>>());
        assert_eq!(c.routes()[&NodeId(1)].hop_count(), 1);
    }

    #[test]
    fn three_hop_route_gives_three_rules() {
        let c = chain_controller(4);
        let route = c.routes()[&NodeId(3)].clone();
        let tables = install_flows(std::slice::from_ref(&route), c.graph()).unwrap();
        assert_eq!(tables.len(), 3);
        let twice = install_flows(&[route.clone(), c.routes()[&NodeId(2)].clone()], c.graph()).unwrap();
        assert_eq!(twice.len(), 3);
    }

    #[test]
    fn non_neighbor_rule_rejected() {
        let c = chain_controller(4);
        let bogus = Route { source: NodeId(3), destination: NodeId(0), slice_id: SliceId::new("all"), hops: vec![NodeId(3), NodeId(0)] };
        assert_eq!(
            install_flows(&[bogus], c.graph()).unwrap_err(),
            FlowError::NotNeighbor { node: NodeId(3), next_hop: NodeId(0) }
        );
    }

    #[test]
    fn ties_break_to_lowest_id() {
        // diamond: 3 reaches 0 via 1 or 2
        let mut g = ConnectivityGraph::new();
        for (u, v) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            g.add_edge(NodeId(u), NodeId(v));
        }
        let nodes = (0..4)
            .map(|i| if i == 0 { NodeRecord::border_router(0, Position::ORIGIN) } else { NodeRecord::sensor(i, Position::ORIGIN, "x") })
            .collect();
        let c = Controller::with_graph(nodes, g, &SlicePlan::non_sliced(NodeId(0))).unwrap();
        assert_eq!(c.routes()[&NodeId(3)].hops, vec![NodeId(3), NodeId(1), NodeId(0)]);
    }

    #[test]
    fn cut_vertex_move_matches_codet() {
        // chain 0(BR)-1-2-3 in slice A; moving 1 to slice B severs 2 and 3
        let mut nodes = build_linear(5, 10.0, Position::ORIGIN, Axis::X).unwrap();
        nodes[0].role = crate::topology::Role::BorderRouter;
        nodes[4].role = crate::topology::Role::BorderRouter;
        let plan = SlicePlan {
            mode: SliceMode::Logical,
            slices: vec![
                SliceSpec::new("A", [NodeId(1), NodeId(2), NodeId(3)], NodeId(0)),
                SliceSpec::new("B", [], NodeId(4)),
            ],
            default_slice: SliceId::new("A"),
        };
        let mut c = Controller::new(nodes, 12.0, &plan).unwrap();
        assert!(c.unavailable().is_empty());
        let delta = PlanDelta { moves: vec![slicing::NodeMove { node: NodeId(1), to: SliceId::new("B") }], retunes: vec![] };
        let (_, outcome) = c.apply_delta(&delta).unwrap();
        let severed: Vec<NodeId> = c
            .unavailable()
            .iter()
            .filter(|(_, e)| matches!(e, RouteError::Unavailable { slice, .. } if slice.as_str() == "A"))
            .map(|(n, _)| *n)
            .collect();
        let report = c.run_codet(&SliceId::new("A"), SimTime::ZERO).unwrap();
        assert_eq!(severed, report.disconnected);
        assert_eq!(severed, vec![NodeId(2), NodeId(3)]);
        // node 1 is also out of range of slice B's router
        assert_eq!(outcome.unavailable.len(), 3);
        // no rule references the moved node under slice A
        assert!(c.flows().rules().all(|r| r.slice_id != SliceId::new("A") || r.action_next_hop != NodeId(1)));
    }

    #[test]
    fn route_miss_installs_rule() {
        let mut c = chain_controller(4);
        let rule = c.handle_route_miss(NodeId(2), NodeId(0)).unwrap();
        assert_eq!(rule.action_next_hop, NodeId(1));
        assert!(c.handle_route_miss(NodeId(2), NodeId(3)).is_none());
    }
}
