//! Connectivity detector: finds slice nodes with no path to the border router.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slicing::SliceId;
use crate::time::SimTime;
use crate::topology::{ConnectivityGraph, NodeId};

/// Reports retained per slice.
pub const REPORT_RING: usize = 100;
pub const DEFAULT_CHECK_INTERVAL: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CodetError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("check interval must be positive")]
    ZeroInterval,
}

/// Breadth-first reachability between two nodes.
pub fn path_exists(g: &ConnectivityGraph, start: NodeId, target: NodeId) -> Result<bool, CodetError> {
    for n in [start, target] {
        if !g.contains(n) {
            return Err(CodetError::UnknownNode(n));
        }
    }
    let mut visited = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(current) = queue.pop_front() {
        if current == target {
            return Ok(true);
        }
        if visited.insert(current) {
            queue.extend(g.neighbors(current).filter(|n| !visited.contains(n)));
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// One search outward from the target.
    #[default]
    ReverseBfs,
    /// One search per node towards the target, node by node.
    PerNodeBfs,
}

/// Nodes other than `target` with no path to it, ascending.
pub fn detect(g: &ConnectivityGraph, target: NodeId, strategy: Strategy) -> Result<Vec<NodeId>, CodetError> {
    if !g.contains(target) {
        return Err(CodetError::UnknownNode(target));
    }
    match strategy {
        Strategy::PerNodeBfs => {
            let mut disconnected = Vec::new();
            for n in g.nodes().filter(|&n| n != target) {
                if !path_exists(g, n, target)? {
                    disconnected.push(n);
                }
            }
            Ok(disconnected)
        }
        Strategy::ReverseBfs => {
            let mut reached = BTreeSet::from([target]);
            let mut queue = VecDeque::from([target]);
            while let Some(current) = queue.pop_front() {
                for n in g.neighbors(current) {
                    if reached.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            Ok(g.nodes().filter(|n| !reached.contains(n)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub slice_id: SliceId,
    pub target: NodeId,
    pub disconnected: Vec<NodeId>,
    pub checked_at: SimTime,
}

impl ConnectivityReport {
    pub fn check(
        slice_id: SliceId,
        g: &ConnectivityGraph,
        target: NodeId,
        at: SimTime,
        strategy: Strategy,
    ) -> Result<Self, CodetError> {
        Ok(ConnectivityReport { slice_id, target, disconnected: detect(g, target, strategy)?, checked_at: at })
    }

    pub fn fully_connected(&self) -> bool {
        self.disconnected.is_empty()
    }
}

/// Raised for every report with disconnected nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub slice_id: SliceId,
    pub at: SimTime,
    pub message: String,
}

/// Periodic per-slice checks on a simulated clock.
///
/// Each call to [`CheckScheduler::poll`] runs every check whose due time has
/// passed against the snapshot supplied by the caller.
#[derive(Debug, Clone)]
pub struct CheckScheduler {
    interval: SimTime,
    next_due: SimTime,
    strategy: Strategy,
    history: BTreeMap<SliceId, VecDeque<ConnectivityReport>>,
    notifications: Vec<Notification>,
}

impl CheckScheduler {
    pub fn new(interval: Duration) -> Result<Self, CodetError> {
        let interval = SimTime::from_duration(interval);
        if interval == SimTime::ZERO {
            return Err(CodetError::ZeroInterval);
        }
        Ok(CheckScheduler {
            interval,
            next_due: interval,
            strategy: Strategy::default(),
            history: BTreeMap::new(),
            notifications: Vec::new(),
        })
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn interval(&self) -> Duration {
        self.interval.as_duration()
    }

    /// Changes the cadence; the next check is one new interval after the last one.
    pub fn set_interval(&mut self, interval: Duration) -> Result<(), CodetError> {
        let interval = SimTime::from_duration(interval);
        if interval == SimTime::ZERO {
            return Err(CodetError::ZeroInterval);
        }
        let last = self.next_due.saturating_sub(self.interval);
        self.interval = interval;
        self.next_due = last + interval;
        Ok(())
    }

    /// Runs all checks due at or before `now`.
    pub fn poll(
        &mut self,
        now: SimTime,
        slices: &BTreeMap<SliceId, (ConnectivityGraph, NodeId)>,
    ) -> Result<Vec<ConnectivityReport>, CodetError> {
        let mut out = Vec::new();
        while self.next_due <= now {
            let at = self.next_due;
            for (id, (g, target)) in slices {
                out.push(self.record(ConnectivityReport::check(id.clone(), g, *target, at, self.strategy)?));
            }
            self.next_due = self.next_due + self.interval;
        }
        Ok(out)
    }

    /// Stores a report (manual or scheduled) and raises a notification if needed.
    pub fn record(&mut self, report: ConnectivityReport) -> ConnectivityReport {
        if !report.fully_connected() {
            let message = format!(
                "slice {}: {} node(s) without a path to border router {}: {:?}",
                report.slice_id,
                report.disconnected.len(),
                report.target,
                report.disconnected.iter().map(|n| n.0).collect::<Vec<_>>()
            );
            log::warn!("{message}");
            self.notifications.push(Notification { slice_id: report.slice_id.clone(), at: report.checked_at, message });
        }
        let ring = self.history.entry(report.slice_id.clone()).or_default();
        if ring.len() == REPORT_RING {
            ring.pop_front();
        }
        ring.push_back(report.clone());
        report
    }

    pub fn reports(&self) -> impl Iterator<Item = &ConnectivityReport> {
        self.history.values().flatten()
    }

    pub fn notifications(&self) -> &[Notification] {
        &self.notifications
    }
}

/// All reports produced over `[0, horizon]` for fixed slice graphs.
pub fn schedule_checks(
    slices: &BTreeMap<SliceId, (ConnectivityGraph, NodeId)>,
    interval: Duration,
    horizon: Duration,
) -> Result<Vec<ConnectivityReport>, CodetError> {
    let mut scheduler = CheckScheduler::new(interval)?;
    scheduler.poll(SimTime::from_duration(horizon), slices)
}
