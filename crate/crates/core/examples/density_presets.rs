//! Builds the five density grids and prints neighbour counts at both range presets.

use meshslice::slicing::classify_density;
use meshslice::topology::{build_grid, derive_connectivity, max_neighbor_count, Density, RangePreset};
use meshslice::Position;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<8} {:>8} {:>8} {:>10} {:>10} {:>6}", "density", "spacing", "listed", "nominal", "calibrated", "red");
    for d in Density::ALL {
        let s = d.scenario();
        let nodes = build_grid(97, s.spacing, Position::ORIGIN)?;
        let nominal = derive_connectivity(&nodes, RangePreset::Nominal.meters());
        let calibrated = derive_connectivity(&nodes, RangePreset::Table1Calibrated.meters());
        let red = classify_density(&calibrated, &Default::default())
            .values()
            .filter(|c| c.tier == meshslice::slicing::Tier::Red)
            .count();
        println!(
            "{:<8} {:>8} {:>8} {:>10} {:>10} {:>6}",
            d.as_str(),
            s.spacing,
            s.expected_max_neighbors,
            max_neighbor_count(&nominal),
            max_neighbor_count(&calibrated),
            red
        );
    }
    Ok(())
}
