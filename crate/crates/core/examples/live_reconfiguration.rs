//! Moves chairs into the corridor slice halfway through a run and compares PDR.

use meshslice::api::Deployment;
use meshslice::scenario::{Cell, ScenarioConfig};
use meshslice::slicing::{NodeMove, PlanDelta};
use meshslice::topology::Density;
use meshslice::{NodeId, SimTime, SliceId, SliceMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::arena();
    let cell = Cell { density: Density::Dense, mode: SliceMode::Physical, rate: 10.0 };
    let (_, controller) = cfg.prepare(&cell)?;
    let mut d = Deployment::new(controller, cfg.sim_config(&cell, 1))?;

    d.advance(SimTime::from_secs(900))?;
    let before = d.simulator().report();

    let moves = (0..9).map(|n| NodeMove { node: NodeId(n), to: SliceId::new("A") }).collect();
    let (event, outcome) = d.apply_delta(&PlanDelta { moves, retunes: vec![] })?;
    let moved: Vec<NodeId> = event.moved.iter().map(|m| m.node).collect();
    println!("moved {moved:?}; {} routes changed, {} retunes", outcome.changed_routes.len(), outcome.retunes.len());

    d.advance(SimTime::from_secs(1800))?;
    let after = d.simulator().report();
    for (label, r) in [("first half", &before), ("whole run", &after)] {
        let slices: Vec<String> =
            r.per_slice.iter().map(|(id, c)| format!("{id} {}/{}", c.received, c.sent)).collect();
        println!("{label}: pdr {:.4} ({})", r.pdr.unwrap_or(f64::NAN), slices.join(", "));
    }
    Ok(())
}
