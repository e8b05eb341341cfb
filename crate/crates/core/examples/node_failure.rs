//! Fails corridor motes one by one and shows what the connectivity check reports.

use meshslice::scenario::{Cell, ScenarioConfig};
use meshslice::topology::Density;
use meshslice::{NodeId, SimTime, SliceId, SliceMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let cfg = ScenarioConfig::arena();
    let (_, mut controller) = cfg.prepare(&Cell { density: Density::Medium, mode: SliceMode::Physical, rate: 6.0 })?;
    let corridor = SliceId::new("A");
    for (minute, node) in [(1, 90), (2, 91), (3, 81)] {
        let outcome = controller.fail_node(NodeId(node))?;
        let report = controller.run_codet(&corridor, SimTime::from_secs(minute * 60))?;
        println!(
            "t={}min failed {node}: {} routes changed, disconnected {:?}",
            minute,
            outcome.changed_routes.len(),
            report.disconnected
        );
    }
    println!("{} sensors without a route", controller.unavailable().len());
    Ok(())
}
