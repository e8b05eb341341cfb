//! Slice-aware SDN control for dense multi-hop IEEE 802.15.4 networks.
//!
//! The crate bundles the pieces needed to study network slicing in ultra-dense
//! deployments:
//!
//! - [`topology`]: node placement presets and unit-disk connectivity.
//! - [`slicing`]: slice plans, channel allocation, density classification and
//!   live reconfiguration.
//! - [`codet`]: connectivity checks from every slice node to its border router.
//! - [`controller`]: hop-count routing confined to slices and flow tables.
//! - [`sim`]: a deterministic discrete-event airtime simulator with PDR accounting.
//! - [`scenario`]: the density × mode × traffic experiment matrix and summaries.
//! - [`api`]: the northbound HTTP+JSON service.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod api;
pub mod codet;
pub mod controller;
pub mod scenario;
pub mod sim;
pub mod slicing;
pub mod time;
pub mod topology;

pub use controller::{Controller, FlowRule, FlowTables, Route};
pub use sim::{PdrReport, SimConfig, Simulator, TrafficProfile};
pub use slicing::{Channel, SliceId, SliceMode, SlicePlan, SliceSpec};
pub use time::SimTime;
pub use topology::{ConnectivityGraph, NodeId, NodeRecord, Position};
