//! Serves the northbound API over the dense physical arena on 127.0.0.1:8080.
//!
//! Try `curl localhost:8080/plan` or `curl -X POST localhost:8080/sim/start`.

use meshslice::api::{serve, ApiState, Deployment};
use meshslice::scenario::{Cell, ScenarioConfig};
use meshslice::topology::Density;
use meshslice::SliceMode;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = ScenarioConfig::arena();
    let cell = Cell { density: Density::Dense, mode: SliceMode::Physical, rate: 6.0 };
    let (_, controller) = cfg.prepare(&cell)?;
    let state = ApiState::new(Deployment::new(controller, cfg.sim_config(&cell, 1))?);
    serve(state, "127.0.0.1:8080".parse()?).await?;
    Ok(())
}
