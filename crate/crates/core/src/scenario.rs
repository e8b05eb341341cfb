//! Experiment matrix: densities × slicing modes × traffic rates × seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerError};
use crate::sim::{MacParams, PdrReport, SimConfig, SimError, SimOutcome, Simulator, TrafficProfile};
use crate::slicing::{SliceId, SliceMode, SlicePlan, SliceSpec};
use crate::time::SimTime;
use crate::topology::{ArenaLayout, Density, NodeId, NodeRecord, RangePreset, TopologyError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn default_seeds() -> u64 {
    5
}

fn default_first_seed() -> u64 {
    1
}

fn default_duration() -> u64 {
    30
}

fn default_payload() -> u32 {
    128
}

/// A scenario file: the northbound plan schema plus simulation fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub densities: Vec<Density>,
    pub modes: Vec<SliceMode>,
    /// Packets per minute per node.
    pub rates: Vec<f64>,
    #[serde(default = "default_payload")]
    pub payload: u32,
    #[serde(default = "default_duration")]
    pub duration_min: u64,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_first_seed")]
    pub first_seed: u64,
    #[serde(default)]
    pub range: RangePreset,
    #[serde(default)]
    pub mac: MacParams,
    /// Two-slice plan over the arena layout. Its channels are used in physical
    /// mode and dropped otherwise; non-sliced runs use a single slice.
    pub plan: SlicePlan,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The arena deployment: corridor slice A on channel 15, chair slice B on
    /// channel 26, every density, all three modes, both traffic loads.
    pub fn arena() -> Self {
        let layout = ArenaLayout::build(1.0, true).expect("static layout");
        let chan = |c| crate::slicing::Channel::new(c).expect("static channel");
        ScenarioConfig {
            name: "arena".into(),
            densities: Density::ALL.to_vec(),
            modes: SliceMode::ALL.to_vec(),
            rates: vec![TrafficProfile::HIGH.rate, TrafficProfile::HEAVY.rate],
            payload: default_payload(),
            duration_min: default_duration(),
            seeds: default_seeds(),
            first_seed: default_first_seed(),
            range: RangePreset::Nominal,
            mac: MacParams::default(),
            plan: SlicePlan {
                mode: SliceMode::Physical,
                slices: vec![
                    SliceSpec::new("A", layout.corridor.iter().copied(), layout.corridor_router).with_channel(chan(15)),
                    SliceSpec::new("B", layout.chairs.iter().copied(), layout.chair_router.expect("two routers"))
                        .with_channel(chan(26)),
                ],
                default_slice: SliceId::new("B"),
            },
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &density in &self.densities {
            for &mode in &self.modes {
                for &rate in &self.rates {
                    out.push(Cell { density, mode, rate });
                }
            }
        }
        out
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (self.first_seed..self.first_seed + self.seeds).collect()
    }

    /// Checks every cell up front; reports all problems at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.densities.is_empty() || self.modes.is_empty() || self.rates.is_empty() {
            problems.push("densities, modes and rates must each be non-empty".to_string());
        }
        if self.seeds == 0 {
            problems.push("seeds must be at least 1".into());
        }
        if self.duration_min == 0 {
            problems.push("duration_min must be positive".into());
        }
        if !(self.range.meters().is_finite() && self.range.meters() > 0.0) {
            problems.push(format!("communication range must be positive, got {}", self.range.meters()));
        }
        for cell in self.cells() {
            if let Err(e) = self.prepare(&cell) {
                problems.push(format!("{}: {e}", cell.label()));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(problems))
        }
    }

    /// Builds layout, plan and controller for one cell.
    pub fn prepare(&self, cell: &Cell) -> Result<(Vec<NodeRecord>, Controller), ScenarioError> {
        if !(cell.rate.is_finite() && cell.rate > 0.0) {
            return Err(ScenarioError::Validation(vec![format!("rate must be positive, got {}", cell.rate)]));
        }
        let spacing = cell.density.scenario().spacing;
        let two_routers = cell.mode != SliceMode::NonSliced;
        let layout = ArenaLayout::build(spacing, two_routers)?;
        let plan = plan_for_mode(&self.plan, cell.mode, layout.corridor_router);
        let controller = Controller::new(layout.nodes.clone(), self.range.meters(), &plan)?;
        if let Some(e) = controller.unavailable().values().next() {
            return Err(ScenarioError::Validation(vec![e.to_string()]));
        }
        Ok((layout.nodes, controller))
    }

    pub fn sim_config(&self, cell: &Cell, seed: u64) -> SimConfig {
        SimConfig {
            profile: TrafficProfile { rate: cell.rate, payload: self.payload },
            duration: SimTime::from_secs(self.duration_min * 60),
            seed,
            mac: self.mac,
            reactive: false,
        }
    }

    /// Runs one (cell, seed) and returns the full outcome including the event log.
    pub fn run_one(&self, cell: &Cell, seed: u64) -> Result<SimOutcome, ScenarioError> {
        let (nodes, controller) = self.prepare(cell)?;
        let sim = Simulator::new(&nodes, controller.graph(), controller.plan(), controller.flows(), self.sim_config(cell, seed))?;
        Ok(sim.run())
    }
}

/// Derives the plan a given mode runs with from the operator's sliced plan.
pub fn plan_for_mode(base: &SlicePlan, mode: SliceMode, single_router: NodeId) -> SlicePlan {
    match mode {
        SliceMode::NonSliced => SlicePlan::non_sliced(single_router),
        SliceMode::Logical => SlicePlan {
            mode,
            slices: base.slices.iter().map(|s| SliceSpec { channel: None, ..s.clone() }).collect(),
            default_slice: base.default_slice.clone(),
        },
        SliceMode::Physical => SlicePlan { mode, ..base.clone() },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub density: Density,
    pub mode: SliceMode,
    pub rate: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.density, self.mode, self.rate)
    }
}

/// One CSV row per run. Column order is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub density: Density,
    pub mode: SliceMode,
    pub rate: f64,
    pub seed: u64,
    pub sent: u64,
    pub received: u64,
    pub pdr: f64,
    /// `slice:received/sent` pairs joined by `|`.
    pub slices: String,
    pub drop_collision: u64,
    pub drop_retry: u64,
    pub drop_queue: u64,
    pub drop_no_route: u64,
    pub in_flight: u64,
}

impl RunRow {
    pub fn new(cell: &Cell, seed: u64, report: &PdrReport) -> Self {
        let slices = report
            .per_slice
            .iter()
            .map(|(id, c)| format!("{id}:{}/{}", c.received, c.sent))
            .collect::<Vec<_>>()
            .join("|");
        RunRow {
            density: cell.density,
            mode: cell.mode,
            rate: cell.rate,
            seed,
            sent: report.sent,
            received: report.received,
            pdr: report.pdr.unwrap_or(f64::NAN),
            slices,
            drop_collision: report.drops.collision,
            drop_retry: report.drops.retry,
            drop_queue: report.drops.queue,
            drop_no_route: report.drops.no_route,
            in_flight: report.in_flight,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell { density: self.density, mode: self.mode, rate: self.rate }
    }

    /// Per-slice delivery ratios parsed back from [`RunRow::slices`].
    pub fn slice_pdr(&self) -> BTreeMap<SliceId, f64> {
        self.slices
            .split('|')
            .filter_map(|part| {
                let (id, counts) = part.split_once(':')?;
                let (rx, tx) = counts.split_once('/')?;
                let (rx, tx): (f64, f64) = (rx.parse().ok()?, tx.parse().ok()?);
                (tx > 0.0).then(|| (SliceId::new(id), rx / tx))
            })
            .collect()
    }
}

/// Runs the whole matrix on up to `workers` threads. `inspect` sees each full
/// outcome (event log included) on the worker thread; its results are returned
/// alongside the rows in matrix order.
pub fn run_matrix_with<T, F>(config: &ScenarioConfig, workers: usize, inspect: F) -> Result<Vec<(RunRow, T)>, ScenarioError>
where
    T: Send,
    F: Fn(&Cell, u64, &SimOutcome) -> T + Sync,
{
    config.validate()?;
    let jobs: Vec<(Cell, u64)> =
        config.cells().into_iter().flat_map(|c| config.seed_list().into_iter().map(move |s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(cell, seed)| {
                let outcome = config.run_one(cell, *seed)?;
                let extra = inspect(cell, *seed, &outcome);
                Ok((RunRow::new(cell, *seed, &outcome.report), extra))
            })
            .collect()
    })
}

pub fn run_matrix(config: &ScenarioConfig, workers: usize) -> Result<Vec<RunRow>, ScenarioError> {
    Ok(run_matrix_with(config, workers, |_, _, _| ())?.into_iter().map(|(r, _)| r).collect())
}

pub fn write_rows(path: &Path, rows: &[RunRow]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<RunRow>, ScenarioError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub density: Density,
    pub mode: SliceMode,
    pub rate: f64,
    pub runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub slice_means: BTreeMap<SliceId, f64>,
}

/// Verdict of one trend check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    /// Cells of the density × mode × rate grid with no rows.
    pub missing: Vec<String>,
    pub verdicts: Vec<Verdict>,
}

fn key(rate: f64) -> u64 {
    rate.to_bits()
}

impl Summary {
    pub fn cell(&self, density: Density, mode: SliceMode, rate: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.density == density && c.mode == mode && key(c.rate) == key(rate))
    }

    pub fn mean(&self, density: Density, mode: SliceMode, rate: f64) -> Option<f64> {
        self.cell(density, mode, rate).map(|c| c.mean)
    }

    /// Overall PDR table: one block per rate, densities as rows, modes as columns.
    pub fn overall_table(&self) -> String {
        let mut out = String::new();
        let (densities, modes, rates) = self.axes();
        for rate in rates {
            let _ = writeln!(out, "PDR (%) at {rate} pkt/min/node");
            let _ = write!(out, "{:<8}", "density");
            for m in &modes {
                let _ = write!(out, " {:>11}", m.as_str());
            }
            out.push('\n');
            for d in densities.iter().rev() {
                let _ = write!(out, "{:<8}", d.as_str());
                for m in &modes {
                    match self.mean(*d, *m, rate) {
                        Some(v) => { let _ = write!(out, " {:>11.2}", v * 100.0); }
                        None => { let _ = write!(out, " {:>11}", "missing"); }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Per-slice PDR table for the sliced modes.
    pub fn slice_table(&self) -> String {
        let mut out = String::new();
        let (densities, modes, rates) = self.axes();
        let slices: BTreeSet<SliceId> = self
            .cells
            .iter()
            .filter(|c| c.mode != SliceMode::NonSliced)
            .flat_map(|c| c.slice_means.keys().cloned())
            .collect();
        let modes: Vec<SliceMode> = modes.into_iter().filter(|m| *m != SliceMode::NonSliced).collect();
        for slice in &slices {
            for &rate in &rates {
                let _ = writeln!(out, "Slice {slice} PDR (%) at {rate} pkt/min/node");
                let _ = write!(out, "{:<8}", "density");
                for m in &modes {
                    let _ = write!(out, " {:>9}", m.as_str());
                }
                out.push('\n');
                for d in densities.iter().rev() {
                    let _ = write!(out, "{:<8}", d.as_str());
                    for m in &modes {
                        match self.cell(*d, *m, rate).and_then(|c| c.slice_means.get(slice)) {
                            Some(v) => { let _ = write!(out, " {:>9.2}", v * 100.0); }
                            None => { let _ = write!(out, " {:>9}", "-"); }
                        }
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        out
    }

    fn axes(&self) -> (Vec<Density>, Vec<SliceMode>, Vec<f64>) {
        let densities: BTreeSet<Density> = self.cells.iter().map(|c| c.density).collect();
        let modes: BTreeSet<SliceMode> = self.cells.iter().map(|c| c.mode).collect();
        let mut rates: Vec<f64> = self.cells.iter().map(|c| c.rate).collect();
        rates.sort_by(f64::total_cmp);
        rates.dedup();
        (densities.into_iter().collect(), modes.into_iter().collect(), rates)
    }
}

/// Per-cell mean/min/max plus the trend verdicts.
pub fn summarize(rows: &[RunRow]) -> Summary {
    let mut groups: BTreeMap<(Density, SliceMode, u64), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.density, r.mode, key(r.rate))).or_default().push(r);
    }
    let cells: Vec<CellSummary> = groups
        .iter()
        .map(|(&(density, mode, _), rs)| {
            let pdrs: Vec<f64> = rs.iter().map(|r| r.pdr).collect();
            let mut slice_values: BTreeMap<SliceId, Vec<f64>> = BTreeMap::new();
            for r in rs {
                for (id, v) in r.slice_pdr() {
                    slice_values.entry(id).or_default().push(v);
                }
            }
            CellSummary {
                density,
                mode,
                rate: rs[0].rate,
                runs: rs.len(),
                mean: mean(&pdrs),
                min: pdrs.iter().copied().fold(f64::INFINITY, f64::min),
                max: pdrs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                slice_means: slice_values.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
            }
        })
        .collect();

    let mut summary = Summary { cells, missing: Vec::new(), verdicts: Vec::new() };
    let (densities, modes, rates) = summary.axes();
    for &d in &densities {
        for &m in &modes {
            for &r in &rates {
                if summary.cell(d, m, r).is_none() {
                    summary.missing.push(Cell { density: d, mode: m, rate: r }.label());
                }
            }
        }
    }
    summary.verdicts = trend_verdicts(&summary);
    summary
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Minimum strict gap between adjacent modes, in PDR fraction.
pub const MODE_GAP: f64 = 0.01;
/// Allowed PDR increase per density step.
pub const DENSITY_NOISE: f64 = 0.01;

/// Mode ordering at the two densest presets and density degradation per mode.
pub fn trend_verdicts(s: &Summary) -> Vec<Verdict> {
    let mut out = Vec::new();
    let (_, _, rates) = s.axes();
    for &rate in &rates {
        for d in [Density::Ultra, Density::Extra] {
            let get = |m| s.mean(d, m, rate);
            if let (Some(non), Some(log), Some(phy)) =
                (get(SliceMode::NonSliced), get(SliceMode::Logical), get(SliceMode::Physical))
            {
                out.push(Verdict {
                    check: format!("mode-ordering {d} {rate}"),
                    pass: phy - log >= MODE_GAP && log - non >= MODE_GAP,
                    detail: format!("physical {:.4} logical {:.4} non-sliced {:.4}", phy, log, non),
                });
            }
        }
        for m in SliceMode::ALL {
            let series: Vec<(Density, f64)> =
                Density::ALL.iter().filter_map(|&d| s.mean(d, m, rate).map(|v| (d, v))).collect();
            if series.len() < 2 {
                continue;
            }
            let worst = series.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
            out.push(Verdict {
                check: format!("density-degradation {m} {rate}"),
                pass: worst <= DENSITY_NOISE,
                detail: series.iter().map(|(d, v)| format!("{d}={v:.4}")).collect::<Vec<_>>().join(" "),
            });
        }
    }
    out
}

/// Writes `summary.csv` next to the rows and returns the rendered text report.
pub fn write_summary(dir: &Path, summary: &Summary) -> Result<String, ScenarioError> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["density", "mode", "rate", "runs", "mean", "min", "max", "slices"])?;
    for c in &summary.cells {
        let slices =
            c.slice_means.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join("|");
        w.write_record([
            c.density.as_str().to_string(),
            c.mode.as_str().to_string(),
            c.rate.to_string(),
            c.runs.to_string(),
            c.mean.to_string(),
            c.min.to_string(),
            c.max.to_string(),
            slices,
        ])?;
    }
    w.flush()?;
    let mut text = summary.overall_table();
    text.push_str(&summary.slice_table());
    for m in &summary.missing {
        let _ = writeln!(text, "MISSING {m}");
    }
    for v in &summary.verdicts {
        let _ = writeln!(text, "{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.check, v.detail);
    }
    std::fs::write(dir.join("summary.txt"), &text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: Density, m: SliceMode, rate: f64, seed: u64, pdr: f64) -> RunRow {
        RunRow {
            density: d,
            mode: m,
            rate,
            seed,
            sent: 100,
            received: (pdr * 100.0) as u64,
            pdr,
            slices: format!("A:{}/100", (pdr * 100.0) as u64),
            drop_collision: 0,
            drop_retry: 0,
            drop_queue: 0,
            drop_no_route: 0,
            in_flight: 100 - (pdr * 100.0) as u64,
        }
    }

    #[test]
    fn matrix_shape() {
        let cfg = ScenarioConfig::arena();
        assert_eq!(cfg.cells().len() * cfg.seed_list().len(), 150);
    }

    #[test]
    fn constant_rows_mean() {
        let rows: Vec<_> = (0..5).map(|s| row(Density::Ultra, SliceMode::Logical, 6.0, s, 0.9)).collect();
        let s = summarize(&rows);
        let c = s.cell(Density::Ultra, SliceMode::Logical, 6.0).unwrap();
        assert!((c.mean - 0.9).abs() < 1e-12);
        assert_eq!((c.min, c.max, c.runs), (0.9, 0.9, 5));
    }

    #[test]
    fn hand_computed_mean() {
        let values = [0.91, 0.93, 0.95, 0.90, 0.96];
        let rows: Vec<_> =
            values.iter().enumerate().map(|(i, &v)| row(Density::High, SliceMode::Physical, 10.0, i as u64, v)).collect();
        let s = summarize(&rows);
        assert!((s.mean(Density::High, SliceMode::Physical, 10.0).unwrap() - 0.93).abs() < 1e-12);
    }

    #[test]
    fn missing_cells_flagged() {
        let rows = vec![
            row(Density::Ultra, SliceMode::Logical, 6.0, 1, 0.9),
            row(Density::Medium, SliceMode::Physical, 6.0, 1, 0.9),
        ];
        let s = summarize(&rows);
        assert!(s.missing.contains(&"ultra/physical/6".to_string()));
        assert!(s.missing.contains(&"medium/logical/6".to_string()));
    }

    #[test]
    fn plan_for_mode_shapes() {
        let cfg = ScenarioConfig::arena();
        let non = plan_for_mode(&cfg.plan, SliceMode::NonSliced, NodeId(97));
        assert_eq!(non.slices.len(), 1);
        let logical = plan_for_mode(&cfg.plan, SliceMode::Logical, NodeId(97));
        assert!(logical.slices.iter().all(|s| s.channel.is_none()));
        let physical = plan_for_mode(&cfg.plan, SliceMode::Physical, NodeId(97));
        assert_eq!(physical.slices[0].channel.unwrap().number(), 15);
    }

    #[test]
    fn invalid_cells_reported_together() {
        let mut cfg = ScenarioConfig::arena();
        cfg.rates = vec![6.0, -1.0];
        cfg.seeds = 0;
        match cfg.validate() {
            Err(ScenarioError::Validation(p)) => {
                assert!(p.iter().any(|s| s.contains("seeds")));
                assert!(p.iter().filter(|s| s.contains("rate must be positive")).count() == 15);
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
