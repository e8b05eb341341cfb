use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshslice::api::{self, ApiState, Deployment};
use meshslice::scenario::{self, Cell, ScenarioConfig};
use meshslice::sim::render_log;
use meshslice::topology::Density;
use meshslice::SliceMode;

#[derive(Parser)]
#[command(name = "meshslice", version, about = "Slice-aware SDN controller and airtime simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the density × mode × rate matrix and write runs.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed count in the config.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Also write one event log per run under <out>/logs.
        #[arg(long)]
        event_logs: bool,
    },
    /// Per-cell statistics and comparison tables from a run directory.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Controller plus a paused simulator behind the northbound API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Scenario file; the built-in arena scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "ultra")]
        density: Density,
        #[arg(long, default_value = "physical")]
        mode: SliceMode,
        #[arg(long, default_value_t = 6.0)]
        rate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { config, seeds, out, workers, event_logs } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(n) = seeds {
                cfg.seeds = n;
            }
            std::fs::create_dir_all(&out)?;
            let logs = out.join("logs");
            if event_logs {
                std::fs::create_dir_all(&logs)?;
            }
            let started = std::time::Instant::now();
            let results = scenario::run_matrix_with(&cfg, workers, |cell, seed, outcome| {
                if !event_logs {
                    return Ok(());
                }
                let name = format!("{}_{}_{}_{}.log", cell.density, cell.mode, cell.rate, seed);
                std::fs::write(logs.join(name), render_log(&outcome.log))
            })?;
            let mut rows = Vec::with_capacity(results.len());
            for (row, written) in results {
                written?;
                rows.push(row);
            }
            scenario::write_rows(&out.join("runs.csv"), &rows)?;
            log::info!("{} runs in {:.1?}, results in {}", rows.len(), started.elapsed(), out.display());
        }
        Command::Summarize { input } => {
            let rows = scenario::read_rows(&input.join("runs.csv"))?;
            let summary = scenario::summarize(&rows);
            print!("{}", scenario::write_summary(&input, &summary)?);
        }
        Command::Serve { bind, config, density, mode, rate, seed } => {
            let cfg = match config {
                Some(path) => ScenarioConfig::load(&path)?,
                None => ScenarioConfig::arena(),
            };
            let cell = Cell { density, mode, rate };
            let (_, controller) = cfg.prepare(&cell)?;
            let deployment = Deployment::new(controller, cfg.sim_config(&cell, seed))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(api::serve(ApiState::new(deployment), bind))?;
        }
    }
    Ok(())
}
