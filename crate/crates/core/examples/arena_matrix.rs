//! Runs the arena experiment matrix and prints the PDR tables.
//!
//! `cargo run --release --example arena_matrix -- [seeds] [minutes]`

use meshslice::scenario::{run_matrix, summarize, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut config = ScenarioConfig::arena();
    if let Some(seeds) = args.next() {
        config.seeds = seeds.parse()?;
    }
    if let Some(minutes) = args.next() {
        config.duration_min = minutes.parse()?;
    }
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let rows = run_matrix(&config, workers)?;
    let summary = summarize(&rows);
    print!("{}", summary.overall_table());
    print!("{}", summary.slice_table());
    for v in &summary.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.check, v.detail);
    }
    Ok(())
}
