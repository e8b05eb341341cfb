//! Discrete-event airtime simulator of the data plane.
//!
//! Every sensor emits periodic packets towards its slice's border router.
//! Frames are forwarded hop by hop along installed flow rules using a
//! carrier-sense MAC on the node's radio channel. Two frames overlapping in
//! time at a receiver in range of both senders are both lost; frames on
//! different channels never interact.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{FlowTables, RetuneDirective, RoutingSnapshot};
use crate::slicing::{Channel, SliceId, SlicePlan};
use crate::time::SimTime;
use crate::topology::{ConnectivityGraph, NodeId, NodeRecord};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("sensor {node} has no flow rule towards {destination} and reactive routing is off")]
    MissingFlowRule { node: NodeId, destination: NodeId },
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("node {0} belongs to no slice")]
    Unassigned(NodeId),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    /// Data packets per minute per node.
    pub rate: f64,
    pub payload: u32,
}

impl TrafficProfile {
    pub const HIGH: TrafficProfile = TrafficProfile { rate: 6.0, payload: 128 };
    pub const HEAVY: TrafficProfile = TrafficProfile { rate: 10.0, payload: 128 };

    pub fn period(&self) -> SimTime {
        SimTime::from_nanos((60e9 / self.rate).round() as u64)
    }
}

/// Carrier-sense MAC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacParams {
    pub bitrate_bps: u64,
    pub header_bytes: u32,
    pub backoff_min: SimTime,
    pub backoff_max: SimTime,
    /// Busy channel assessments tolerated before a retry is counted.
    pub max_backoffs: u32,
    pub max_retries: u32,
    pub queue_capacity: usize,
    /// A transmission becomes audible to carrier sense only after this long
    /// (receive-to-transmit turnaround).
    pub sense_delay: SimTime,
    /// Re-send a frame whose reception failed, up to `max_retries`.
    pub retry_on_collision: bool,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            bitrate_bps: 250_000,
            header_bytes: 23,
            backoff_min: SimTime::from_micros(320),
            backoff_max: SimTime::from_micros(2_560),
            max_backoffs: 4,
            max_retries: 3,
            queue_capacity: 8,
            sense_delay: SimTime::from_micros(192),
            retry_on_collision: true,
        }
    }
}

impl MacParams {
    pub fn airtime(&self, payload: u32) -> SimTime {
        let bits = (payload + self.header_bytes) as u64 * 8;
        SimTime::from_nanos(bits * 1_000_000_000 / self.bitrate_bps)
    }

    fn draw_backoff(&self, rng: &mut impl Rng) -> SimTime {
        SimTime::from_nanos(rng.gen_range(self.backoff_min.as_nanos()..=self.backoff_max.as_nanos()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub profile: TrafficProfile,
    pub duration: SimTime,
    pub seed: u64,
    pub mac: MacParams,
    /// Ask the controller for a rule on a route miss instead of failing up front.
    pub reactive: bool,
}

impl SimConfig {
    pub fn new(profile: TrafficProfile, duration_min: u64, seed: u64) -> Self {
        SimConfig { profile, duration: SimTime::from_secs(duration_min * 60), seed, mac: MacParams::default(), reactive: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Delivered,
    DroppedCollision,
    DroppedRetry,
    DroppedQueue,
    DroppedNoRoute,
    InFlight,
}

impl Fate {
    pub fn as_str(self) -> &'static str {
        match self {
            Fate::Delivered => "delivered",
            Fate::DroppedCollision => "dropped_collision",
            Fate::DroppedRetry => "dropped_retry",
            Fate::DroppedQueue => "dropped_queue",
            Fate::DroppedNoRoute => "dropped_no_route",
            Fate::InFlight => "in_flight",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub id: u64,
    pub origin: NodeId,
    pub slice: SliceId,
    pub generated_at: SimTime,
    pub fate: Fate,
    /// Successful link-layer receptions so far.
    pub hops: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropBreakdown {
    pub collision: u64,
    pub retry: u64,
    pub queue: u64,
    pub no_route: u64,
}

impl DropBreakdown {
    pub fn total(&self) -> u64 {
        self.collision + self.retry + self.queue + self.no_route
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceCounts {
    pub sent: u64,
    pub received: u64,
    pub pdr: Option<f64>,
}

/// Delivery ratio: received over sent data packets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdrReport {
    pub sent: u64,
    pub received: u64,
    pub pdr: Option<f64>,
    /// Set when nothing was sent and the ratio is not defined.
    pub undefined: bool,
    pub in_flight: u64,
    pub drops: DropBreakdown,
    pub per_slice: BTreeMap<SliceId, SliceCounts>,
}

fn ratio(received: u64, sent: u64) -> Option<f64> {
    (sent > 0).then(|| received as f64 / sent as f64)
}

pub fn compute_pdr(records: &[PacketRecord]) -> PdrReport {
    let mut report = PdrReport::default();
    for r in records {
        report.sent += 1;
        let slice = report.per_slice.entry(r.slice.clone()).or_default();
        slice.sent += 1;
        match r.fate {
            Fate::Delivered => {
                report.received += 1;
                slice.received += 1;
            }
            Fate::DroppedCollision => report.drops.collision += 1,
            Fate::DroppedRetry => report.drops.retry += 1,
            Fate::DroppedQueue => report.drops.queue += 1,
            Fate::DroppedNoRoute => report.drops.no_route += 1,
            Fate::InFlight => report.in_flight += 1,
        }
    }
    report.pdr = ratio(report.received, report.sent);
    report.undefined = report.pdr.is_none();
    for s in report.per_slice.values_mut() {
        s.pdr = ratio(s.received, s.sent);
    }
    report
}

/// Packet creation times: one packet per period per node, each node with an
/// independent uniform phase in `[0, period)`. Sorted by time, then node.
pub fn generate_traffic(profile: &TrafficProfile, nodes: &[NodeId], duration: SimTime, seed: u64) -> Vec<(SimTime, NodeId)> {
    let period = profile.period();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted = nodes.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    for n in sorted {
        let mut t = SimTime::from_nanos(rng.gen_range(0..period.as_nanos()));
        while t < duration {
            out.push((t, n));
            t = t + period;
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TxEnd,
    Rx,
    Generate,
    TxAttempt,
    Retry,
    Drop,
    Collision,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TxEnd => "tx_end",
            EventKind::Rx => "rx",
            EventKind::Generate => "generate",
            EventKind::TxAttempt => "tx_attempt",
            EventKind::Retry => "retry",
            EventKind::Drop => "drop",
            EventKind::Collision => "collision",
        }
    }
}

/// One event-log line.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: SimTime,
    pub kind: EventKind,
    pub node: NodeId,
    pub packet: Option<u64>,
    pub slice: Option<SliceId>,
    pub channel: Channel,
    pub detail: String,
}

/// Renders entries as `time kind node packet slice channel detail` lines.
pub fn render_log(entries: &[LogEntry]) -> String {
    let mut out = String::with_capacity(entries.len() * 48);
    for e in entries {
        let packet = e.packet.map_or("-".to_string(), |p| p.to_string());
        let slice = e.slice.as_ref().map_or("-", |s| s.as_str());
        let detail = if e.detail.is_empty() { "-" } else { &e.detail };
        let _ = writeln!(out, "{} {} {} {} {} {} {}", e.time, e.kind.as_str(), e.node, packet, slice, e.channel, detail);
    }
    out
}

/// A frame on the air, as seen by the reception resolver.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub channel: Channel,
    pub slice: SliceId,
    pub start: SimTime,
    pub end: SimTime,
}

impl Frame {
    fn overlaps(&self, other: &Frame) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reception {
    Rx,
    /// Slices of every frame involved, the received frame's first.
    Collision { slices: Vec<SliceId> },
}

/// Outcome of `frame` at its receiver given other frames on the air.
///
/// A frame interferes when it shares the channel, overlaps in time and its
/// sender is the receiver itself or within range of the receiver. One or more
/// interferers destroy the frame; there is no capture.
pub fn resolve_reception(
    frame: &Frame,
    others: &[Frame],
    in_range: impl Fn(NodeId, NodeId) -> bool,
) -> Reception {
    let mut slices = vec![frame.slice.clone()];
    for o in others {
        if o.channel == frame.channel
            && o.overlaps(frame)
            && (o.sender == frame.receiver || in_range(o.sender, frame.receiver))
        {
            slices.push(o.slice.clone());
        }
    }
    if slices.len() == 1 {
        Reception::Rx
    } else {
        Reception::Collision { slices }
    }
}

/// Per-node MAC counters for the frame at the head of the queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacState {
    pub backoffs: u32,
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxDecision {
    Started,
    Backoff(SimTime),
    /// Backoffs exhausted; a retry was counted and a new backoff drawn.
    Retry(SimTime),
    DroppedRetry,
}

/// Carrier-sense step for one frame.
pub fn attempt_transmit(state: &mut MacState, busy: bool, mac: &MacParams, rng: &mut impl Rng) -> TxDecision {
    if !busy {
        return TxDecision::Started;
    }
    state.backoffs += 1;
    if state.backoffs <= mac.max_backoffs {
        return TxDecision::Backoff(mac.draw_backoff(rng));
    }
    state.backoffs = 0;
    state.retries += 1;
    if state.retries > mac.max_retries {
        TxDecision::DroppedRetry
    } else {
        TxDecision::Retry(mac.draw_backoff(rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    TxEnd { tx: usize },
    Rx { packet: usize, from: usize },
    Generate { packet: usize },
    TxAttempt,
}

impl Pending {
    fn rank(&self) -> u8 {
        match self {
            Pending::TxEnd { .. } => 0,
            Pending::Rx { .. } => 1,
            Pending::Generate { .. } => 2,
            Pending::TxAttempt => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct QueuedEvent {
    time: SimTime,
    rank: u8,
    node: NodeId,
    packet: u64,
    seq: u64,
    idx: usize,
    what: Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Waiting,
    Transmitting,
}

#[derive(Debug, Clone)]
struct NodeState {
    queue: VecDeque<usize>,
    phase: Phase,
    mac: MacState,
}

#[derive(Debug, Clone)]
struct Transmission {
    sender: usize,
    receiver: usize,
    packet: usize,
    frame: Frame,
    interferers: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimState {
    Ready,
    Running,
    Finished,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimStatus {
    pub state: SimState,
    pub now: SimTime,
    pub duration: SimTime,
    pub events_processed: u64,
    pub pending_events: usize,
}

/// Finished run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: PdrReport,
    pub records: Vec<PacketRecord>,
    pub log: Vec<LogEntry>,
}

pub struct Simulator {
    config: SimConfig,
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    adjacency: Vec<bool>,
    channel: Vec<Channel>,
    slice: Vec<Option<SliceId>>,
    destination: Vec<Option<usize>>,
    next_hop: Vec<BTreeMap<usize, usize>>,
    resolver: Option<RoutingSnapshot>,
    nodes: Vec<NodeState>,
    packets: Vec<PacketRecord>,
    packet_dest: Vec<usize>,
    transmissions: Vec<Transmission>,
    active: Vec<usize>,
    events: BinaryHeap<Reverse<QueuedEvent>>,
    seq: u64,
    now: SimTime,
    processed: u64,
    log: Vec<LogEntry>,
    /// Packets whose generate event has run; ids are assigned in that order.
    generated: usize,
    rng: ChaCha8Rng,
    airtime: SimTime,
}

impl Simulator {
    /// Prepares a run. With reactive routing off, every sensor must already
    /// have a rule chain that reaches its border router.
    pub fn new(
        nodes: &[NodeRecord],
        graph: &ConnectivityGraph,
        plan: &SlicePlan,
        flows: &FlowTables,
        config: SimConfig,
    ) -> Result<Self, SimError> {
        if !(config.profile.rate.is_finite() && config.profile.rate > 0.0) {
            return Err(SimError::InvalidConfig(format!("traffic rate must be positive, got {}", config.profile.rate)));
        }
        if config.mac.backoff_min > config.mac.backoff_max || config.mac.bitrate_bps == 0 {
            return Err(SimError::InvalidConfig("inconsistent MAC parameters".into()));
        }
        let ids: Vec<NodeId> = nodes.iter().map(|n| n.id).collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let n = ids.len();
        let mut adjacency = vec![false; n * n];
        for (u, v) in graph.edges() {
            let (Some(&a), Some(&b)) = (index.get(&u), index.get(&v)) else { continue };
            adjacency[a * n + b] = true;
            adjacency[b * n + a] = true;
        }
        let mut sim = Simulator {
            config,
            ids,
            index,
            adjacency,
            channel: vec![Channel::DEFAULT; n],
            slice: vec![None; n],
            destination: vec![None; n],
            next_hop: vec![BTreeMap::new(); n],
            resolver: None,
            nodes: vec![NodeState { queue: VecDeque::new(), phase: Phase::Idle, mac: MacState::default() }; n],
            packets: Vec::new(),
            packet_dest: Vec::new(),
            transmissions: Vec::new(),
            active: Vec::new(),
            events: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            processed: 0,
            log: Vec::new(),
            generated: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            airtime: config.mac.airtime(config.profile.payload),
        };
        sim.rng.set_stream(1);
        sim.update_routing(plan, flows, None)?;
        if !config.reactive {
            sim.check_rule_chains()?;
        }

        let sensors: Vec<NodeId> = nodes.iter().filter(|r| !r.is_border_router()).map(|r| r.id).collect();
        for &s in &sensors {
            if sim.slice[sim.index[&s]].is_none() {
                return Err(SimError::Unassigned(s));
            }
        }
        for (time, node) in generate_traffic(&config.profile, &sensors, config.duration, config.seed) {
            let i = sim.index[&node];
            let packet = sim.packets.len();
            sim.packets.push(PacketRecord {
                id: packet as u64,
                origin: node,
                slice: sim.slice[i].clone().expect("checked above"),
                generated_at: time,
                fate: Fate::InFlight,
                hops: 0,
            });
            sim.packet_dest.push(sim.destination[i].expect("slice has a border router"));
            sim.schedule(time, i, Pending::Generate { packet });
        }
        Ok(sim)
    }

    /// Installs a plan and flow tables; takes effect for subsequent events.
    pub fn update_routing(
        &mut self,
        plan: &SlicePlan,
        flows: &FlowTables,
        resolver: Option<RoutingSnapshot>,
    ) -> Result<(), SimError> {
        for i in 0..self.ids.len() {
            let id = self.ids[i];
            let owner = plan.slice_of(id);
            self.slice[i] = owner.map(|s| s.id.clone());
            self.channel[i] = plan.channel_of(id);
            self.destination[i] = match owner {
                Some(s) => Some(*self.index.get(&s.border_router).ok_or(SimError::UnknownNode(s.border_router))?),
                None => None,
            };
            self.next_hop[i].clear();
        }
        for rule in flows.rules() {
            let node = *self.index.get(&rule.node).ok_or(SimError::UnknownNode(rule.node))?;
            let dest = *self.index.get(&rule.match_destination).ok_or(SimError::UnknownNode(rule.match_destination))?;
            let next = *self.index.get(&rule.action_next_hop).ok_or(SimError::UnknownNode(rule.action_next_hop))?;
            self.next_hop[node].insert(dest, next);
        }
        self.resolver = resolver.or(if self.config.reactive { self.resolver.take() } else { None });
        Ok(())
    }

    /// Enables reactive route resolution against `snapshot`.
    pub fn set_resolver(&mut self, snapshot: RoutingSnapshot) {
        self.config.reactive = true;
        self.resolver = Some(snapshot);
    }

    pub fn retune(&mut self, directive: RetuneDirective) -> Result<(), SimError> {
        let i = *self.index.get(&directive.node).ok_or(SimError::UnknownNode(directive.node))?;
        self.channel[i] = directive.channel;
        Ok(())
    }

    pub fn channel_of(&self, node: NodeId) -> Option<Channel> {
        self.index.get(&node).map(|&i| self.channel[i])
    }

    fn check_rule_chains(&self) -> Result<(), SimError> {
        for start in 0..self.ids.len() {
            let Some(dest) = self.destination[start] else { continue };
            if start == dest {
                continue;
            }
            let mut at = start;
            let mut steps = 0;
            while at != dest {
                match self.next_hop[at].get(&dest) {
                    Some(&next) if steps <= self.ids.len() => {
                        at = next;
                        steps += 1;
                    }
                    _ => return Err(SimError::MissingFlowRule { node: self.ids[at], destination: self.ids[dest] }),
                }
            }
        }
        Ok(())
    }

    fn schedule(&mut self, time: SimTime, node: usize, what: Pending) {
        let packet = match what {
            Pending::Rx { packet, .. } | Pending::Generate { packet } => packet as u64,
            Pending::TxEnd { tx } => self.transmissions[tx].packet as u64,
            Pending::TxAttempt => u64::MAX,
        };
        self.seq += 1;
        self.events.push(Reverse(QueuedEvent {
            time,
            rank: what.rank(),
            node: self.ids[node],
            packet,
            seq: self.seq,
            idx: node,
            what,
        }));
    }

    fn in_range(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.ids.len() + b]
    }

    fn log(&mut self, kind: EventKind, node: usize, packet: Option<usize>, detail: String) {
        let slice = packet.map(|p| self.packets[p].slice.clone());
        self.log.push(LogEntry {
            time: self.now,
            kind,
            node: self.ids[node],
            packet: packet.map(|p| p as u64),
            slice,
            channel: self.channel[node],
            detail,
        });
    }

    fn finish_packet(&mut self, node: usize, packet: usize, fate: Fate) {
        self.packets[packet].fate = fate;
        if fate != Fate::Delivered {
            self.log(EventKind::Drop, node, Some(packet), fate.as_str().to_string());
        }
    }

    /// Processes the next event if it falls within the run duration.
    pub fn step(&mut self) -> Option<SimTime> {
        let Reverse(ev) = *self.events.peek()?;
        if ev.time >= self.config.duration {
            return None;
        }
        self.events.pop();
        self.now = ev.time;
        self.processed += 1;
        match ev.what {
            Pending::Generate { packet } => self.on_generate(ev.idx, packet),
            Pending::TxAttempt => self.on_attempt(ev.idx),
            Pending::TxEnd { tx } => self.on_tx_end(tx),
            Pending::Rx { packet, from } => self.on_rx(ev.idx, packet, from),
        }
        Some(self.now)
    }

    /// Processes events up to and including `until` (capped by the duration).
    pub fn run_until(&mut self, until: SimTime) {
        while let Some(Reverse(ev)) = self.events.peek() {
            if ev.time > until {
                break;
            }
            if self.step().is_none() {
                break;
            }
        }
        if until > self.now {
            self.now = until.min(self.config.duration);
        }
    }

    pub fn run(mut self) -> SimOutcome {
        while self.step().is_some() {}
        self.now = self.config.duration;
        self.outcome()
    }

    pub fn outcome(&self) -> SimOutcome {
        SimOutcome { report: self.report(), records: self.packets[..self.generated].to_vec(), log: self.log.clone() }
    }

    /// Live report; packets still queued or on the air count as in flight.
    pub fn report(&self) -> PdrReport {
        compute_pdr(&self.packets[..self.generated])
    }

    pub fn log_entries(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn status(&self) -> SimStatus {
        let finished = self.events.peek().is_none_or(|Reverse(e)| e.time >= self.config.duration);
        SimStatus {
            state: if finished {
                SimState::Finished
            } else if self.processed == 0 {
                SimState::Ready
            } else {
                SimState::Running
            },
            now: self.now,
            duration: self.config.duration,
            events_processed: self.processed,
            pending_events: self.events.len(),
        }
    }

    fn kick(&mut self, node: usize) {
        if self.nodes[node].phase == Phase::Idle && !self.nodes[node].queue.is_empty() {
            self.nodes[node].phase = Phase::Waiting;
            self.schedule(self.now, node, Pending::TxAttempt);
        }
    }

    fn enqueue(&mut self, node: usize, packet: usize) {
        if self.nodes[node].queue.len() >= self.config.mac.queue_capacity {
            self.finish_packet(node, packet, Fate::DroppedQueue);
        } else {
            self.nodes[node].queue.push_back(packet);
            self.kick(node);
        }
    }

    fn on_generate(&mut self, node: usize, packet: usize) {
        debug_assert_eq!(packet, self.generated);
        self.generated = packet + 1;
        self.log(EventKind::Generate, node, Some(packet), String::new());
        self.enqueue(node, packet);
    }

    fn resolve_next_hop(&mut self, node: usize, dest: usize) -> Option<usize> {
        if let Some(&next) = self.next_hop[node].get(&dest) {
            return Some(next);
        }
        let resolver = self.resolver.as_ref()?;
        let next = resolver.resolve(self.ids[node], self.ids[dest])?;
        let next = *self.index.get(&next)?;
        self.next_hop[node].insert(dest, next);
        Some(next)
    }

    fn pop_head(&mut self, node: usize) {
        let state = &mut self.nodes[node];
        state.queue.pop_front();
        state.mac = MacState::default();
        state.phase = Phase::Idle;
        self.kick(node);
    }

    fn carrier_busy(&self, node: usize) -> bool {
        let horizon = self.config.mac.sense_delay;
        self.active.iter().any(|&t| {
            let tx = &self.transmissions[t];
            tx.frame.channel == self.channel[node]
                && self.in_range(tx.sender, node)
                && tx.frame.start + horizon <= self.now
        })
    }

    fn on_attempt(&mut self, node: usize) {
        let Some(&packet) = self.nodes[node].queue.front() else {
            self.nodes[node].phase = Phase::Idle;
            return;
        };
        let dest = self.packet_dest[packet];
        let Some(next) = self.resolve_next_hop(node, dest) else {
            self.finish_packet(node, packet, Fate::DroppedNoRoute);
            self.pop_head(node);
            return;
        };
        let busy = self.carrier_busy(node);
        let mac = self.config.mac;
        let decision = attempt_transmit(&mut self.nodes[node].mac, busy, &mac, &mut self.rng);
        match decision {
            TxDecision::Started => self.start_transmission(node, next, packet),
            TxDecision::Backoff(delay) => {
                self.log(EventKind::TxAttempt, node, Some(packet), format!("backoff {}", delay.as_nanos()));
                self.schedule(self.now + delay, node, Pending::TxAttempt);
            }
            TxDecision::Retry(delay) => {
                let retries = self.nodes[node].mac.retries;
                self.log(EventKind::Retry, node, Some(packet), format!("busy {retries}"));
                self.schedule(self.now + delay, node, Pending::TxAttempt);
            }
            TxDecision::DroppedRetry => {
                self.finish_packet(node, packet, Fate::DroppedRetry);
                self.pop_head(node);
            }
        }
    }

    fn start_transmission(&mut self, sender: usize, receiver: usize, packet: usize) {
        let frame = Frame {
            sender: self.ids[sender],
            receiver: self.ids[receiver],
            channel: self.channel[sender],
            slice: self.packets[packet].slice.clone(),
            start: self.now,
            end: self.now + self.airtime,
        };
        let tx = self.transmissions.len();
        let mut interferers = Vec::new();
        for &other in &self.active {
            let o = &self.transmissions[other];
            if o.frame.channel != frame.channel {
                continue;
            }
            if o.sender == receiver || self.in_range(o.sender, receiver) {
                interferers.push(o.frame.clone());
            }
        }
        let hit: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&other| {
                let o = &self.transmissions[other];
                o.frame.channel == frame.channel && (o.receiver == sender || self.in_range(sender, o.receiver))
            })
            .collect();
        for other in hit {
            self.transmissions[other].interferers.push(frame.clone());
        }
        self.log(EventKind::TxAttempt, sender, Some(packet), format!("start to={}", self.ids[receiver]));
        self.transmissions.push(Transmission { sender, receiver, packet, frame, interferers });
        self.active.push(tx);
        self.nodes[sender].phase = Phase::Transmitting;
        self.schedule(self.now + self.airtime, sender, Pending::TxEnd { tx });
    }

    fn on_tx_end(&mut self, tx: usize) {
        self.active.retain(|&t| t != tx);
        let t = &mut self.transmissions[tx];
        let (sender, receiver, packet) = (t.sender, t.receiver, t.packet);
        let (frame, interferers) = (t.frame.clone(), std::mem::take(&mut t.interferers));
        let in_range = |a: NodeId, b: NodeId| match (self.index.get(&a), self.index.get(&b)) {
            (Some(&ia), Some(&ib)) => self.in_range(ia, ib),
            _ => false,
        };
        let mut reception = resolve_reception(&frame, &interferers, in_range);
        let mut detail = format!("to={}", self.ids[receiver]);
        if reception == Reception::Rx && self.channel[receiver] != frame.channel {
            reception = Reception::Collision { slices: vec![frame.slice.clone()] };
            detail.push_str(" off-channel");
        }
        self.log(EventKind::TxEnd, sender, Some(packet), detail);
        match reception {
            Reception::Rx => {
                self.schedule(self.now, receiver, Pending::Rx { packet, from: sender });
                self.pop_head(sender);
            }
            Reception::Collision { slices } => {
                let tags: Vec<&str> = slices.iter().map(SliceId::as_str).collect();
                self.log(EventKind::Collision, receiver, Some(packet), format!("slices={}", tags.join(",")));
                let mac = self.config.mac;
                let state = &mut self.nodes[sender].mac;
                if mac.retry_on_collision && state.retries < mac.max_retries {
                    state.retries += 1;
                    state.backoffs = 0;
                    let retries = state.retries;
                    self.log(EventKind::Retry, sender, Some(packet), format!("collision {retries}"));
                    let delay = mac.draw_backoff(&mut self.rng);
                    self.nodes[sender].phase = Phase::Waiting;
                    self.schedule(self.now + delay, sender, Pending::TxAttempt);
                } else {
                    self.finish_packet(sender, packet, Fate::DroppedCollision);
                    self.pop_head(sender);
                }
            }
        }
    }

    fn on_rx(&mut self, node: usize, packet: usize, from: usize) {
        self.packets[packet].hops += 1;
        if self.packet_dest[packet] == node {
            self.log(EventKind::Rx, node, Some(packet), format!("from={} delivered", self.ids[from]));
            self.finish_packet(node, packet, Fate::Delivered);
        } else {
            self.log(EventKind::Rx, node, Some(packet), format!("from={}", self.ids[from]));
            self.enqueue(node, packet);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Controller;
    use crate::slicing::SlicePlan;
    use crate::topology::{NodeRecord, Position};

    #[test]
    fn airtime_of_full_frame() {
        let mac = MacParams::default();
        // (128 + 23) * 8 bits at 250 kb/s
        assert_eq!(mac.airtime(128), SimTime::from_micros(4_832));
    }

    #[test]
    fn pdr_arithmetic() {
        let mut records: Vec<PacketRecord> = (0..100)
            .map(|i| PacketRecord {
                id: i,
                origin: NodeId(1),
                slice: SliceId::new("all"),
                generated_at: SimTime::ZERO,
                fate: if i < 97 { Fate::Delivered } else { Fate::DroppedCollision },
                hops: 1,
            })
            .collect();
        let r = compute_pdr(&records);
        assert_eq!((r.sent, r.received), (100, 97));
        assert_eq!(r.pdr, Some(0.97));
        records.clear();
        let empty = compute_pdr(&records);
        assert!(empty.undefined);
        assert_eq!(empty.pdr, None);
    }

    #[test]
    fn traffic_counts() {
        let nodes: Vec<NodeId> = (0..3).map(NodeId).collect();
        let g = generate_traffic(&TrafficProfile::HIGH, &nodes, SimTime::from_secs(1800), 1);
        assert_eq!(g.len(), 3 * 180);
        let one = generate_traffic(&TrafficProfile::HEAVY, &nodes[..1], SimTime::from_secs(60), 9);
        assert_eq!(one.len(), 10);
        let other = generate_traffic(&TrafficProfile::HIGH, &nodes, SimTime::from_secs(1800), 2);
        assert_eq!(other.len(), g.len());
        assert_ne!(other, g);
        assert!(g.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn backoff_sequence() {
        let mac = MacParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = MacState::default();
        assert_eq!(attempt_transmit(&mut s, false, &mac, &mut rng), TxDecision::Started);
        let mut decisions = Vec::new();
        loop {
            let d = attempt_transmit(&mut s, true, &mac, &mut rng);
            decisions.push(d);
            if d == TxDecision::DroppedRetry {
                break;
            }
        }
        // 4 backoffs per round, 1 initial round + 3 retries, then drop
        assert_eq!(decisions.len(), 4 * 4 + 3 + 1);
        assert_eq!(decisions.iter().filter(|d| matches!(d, TxDecision::Retry(_))).count(), 3);
        for d in decisions {
            if let TxDecision::Backoff(t) | TxDecision::Retry(t) = d {
                assert!(t >= mac.backoff_min && t <= mac.backoff_max);
            }
        }
    }

    fn frame(sender: u32, receiver: u32, channel: u8, slice: &str, start_us: u64) -> Frame {
        Frame {
            sender: NodeId(sender),
            receiver: NodeId(receiver),
            channel: Channel::new(channel).unwrap(),
            slice: SliceId::new(slice),
            start: SimTime::from_micros(start_us),
            end: SimTime::from_micros(start_us + 4_832),
        }
    }

    #[test]
    fn reception_cases() {
        let all = |_: NodeId, _: NodeId| true;
        let a = frame(1, 0, 26, "B", 0);
        assert_eq!(resolve_reception(&a, &[], all), Reception::Rx);
        let b = frame(2, 0, 26, "B", 1_000);
        assert!(matches!(resolve_reception(&a, std::slice::from_ref(&b), all), Reception::Collision { .. }));
        // disjoint in time
        let later = frame(2, 0, 26, "B", 10_000);
        assert_eq!(resolve_reception(&a, &[later], all), Reception::Rx);
        // different channels never interact
        let x = frame(1, 0, 15, "A", 0);
        let y = frame(2, 3, 26, "B", 0);
        assert_eq!(resolve_reception(&x, std::slice::from_ref(&y), all), Reception::Rx);
        assert_eq!(resolve_reception(&y, &[x], all), Reception::Rx);
        // out-of-range interferer is harmless
        assert_eq!(resolve_reception(&a, &[b], |_, _| false), Reception::Rx);
    }

    #[test]
    fn two_node_chain_delivers_everything() {
        let nodes = vec![NodeRecord::border_router(0, Position::ORIGIN), NodeRecord::sensor(1, Position::new(5.0, 0.0), "x")];
        let c = Controller::new(nodes.clone(), 25.0, &SlicePlan::non_sliced(NodeId(0))).unwrap();
        let cfg = SimConfig::new(TrafficProfile::HIGH, 1, 3);
        let out = Simulator::new(&nodes, c.graph(), c.plan(), c.flows(), cfg).unwrap().run();
        assert_eq!(out.report.sent, 6);
        assert_eq!(out.report.pdr, Some(1.0));
    }

    #[test]
    fn missing_rule_is_a_config_error() {
        let nodes = vec![NodeRecord::border_router(0, Position::ORIGIN), NodeRecord::sensor(1, Position::new(5.0, 0.0), "x")];
        let c = Controller::new(nodes.clone(), 25.0, &SlicePlan::non_sliced(NodeId(0))).unwrap();
        let cfg = SimConfig::new(TrafficProfile::HIGH, 1, 3);
        let err = Simulator::new(&nodes, c.graph(), c.plan(), &FlowTables::new(), cfg).err().unwrap();
        assert_eq!(err, SimError::MissingFlowRule { node: NodeId(1), destination: NodeId(0) });
        let reactive = SimConfig { reactive: true, ..cfg };
        let mut sim = Simulator::new(&nodes, c.graph(), c.plan(), &FlowTables::new(), reactive).unwrap();
        sim.set_resolver(c.routing_snapshot());
        assert_eq!(sim.run().report.pdr, Some(1.0));
    }
}
