//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::LogTally;
use meshslice::codet::{detect, Strategy};
use meshslice::scenario::{run_matrix_with, summarize, Cell, ScenarioConfig};
use meshslice::sim::{compute_pdr, render_log, Fate, PacketRecord};
use meshslice::topology::{Density, NodeId};
use meshslice::{SimTime, SliceId, SliceMode};

struct Suite {
    failed: Vec<String>,
}

impl Suite {
    fn check(&mut self, name: &str, pass: bool, detail: impl std::fmt::Display) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }
}

fn graph_corpus() -> Vec<(meshslice::topology::ConnectivityGraph, NodeId)> {
    (0..200u64)
        .map(|i| {
            let n = 10 + (i as usize * 191 / 199);
            // side scaled so the expected degree sweeps from sparse to dense
            let side = (n as f64).sqrt() * (3.0 + (i % 7) as f64);
            let (_, g) = common::random_geometric(n, side, 10.0, 1000 + i);
            (g, NodeId((i as u32 * 31) % n as u32))
        })
        .collect()
}

fn codet(suite: &mut Suite) {
    let corpus = graph_corpus();
    let start = Instant::now();
    let mut mismatches = 0;
    let mut split = 0;
    let mut reverse = Vec::with_capacity(corpus.len());
    for (g, target) in &corpus {
        let found = detect(g, *target, Strategy::ReverseBfs).unwrap();
        if found != common::union_find_disconnected(g, *target) {
            mismatches += 1;
        }
        if !found.is_empty() {
            split += 1;
        }
        reverse.push(found);
    }
    let elapsed = start.elapsed();
    suite.check(
        "codet-oracle",
        mismatches == 0 && elapsed.as_secs_f64() < 10.0,
        format!("{mismatches} mismatches over 200 graphs ({split} disconnected) in {:.3} s", elapsed.as_secs_f64()),
    );
    let disagree = corpus
        .iter()
        .zip(&reverse)
        .filter(|((g, t), r)| &detect(g, *t, Strategy::PerNodeBfs).unwrap() != *r)
        .count();
    suite.check("codet-variants-agree", disagree == 0, format!("{disagree} disagreements over 200 graphs"));
}

fn routing(suite: &mut Suite, cfg: &ScenarioConfig) {
    let mut routes = 0;
    let mut wrong = Vec::new();
    let mut rules = 0;
    let mut leaks = 0;
    for density in Density::ALL {
        for mode in SliceMode::ALL {
            let (_, c) = cfg.prepare(&Cell { density, mode, rate: 6.0 }).unwrap();
            for (&src, route) in c.routes() {
                let s = c.plan().slice_of(src).unwrap();
                let oracle = common::bfs_distance(&c.slice_graphs()[&s.id], src, s.border_router);
                routes += 1;
                if Some(route.hop_count()) != oracle {
                    wrong.push(format!("{density}/{mode}:{src}"));
                }
            }
            if mode != SliceMode::NonSliced {
                for rule in c.flows().rules() {
                    rules += 1;
                    if !c.plan().slice(&rule.slice_id).unwrap().members.contains(&rule.action_next_hop) {
                        leaks += 1;
                    }
                }
            }
        }
    }
    suite.check("route-optimality", wrong.is_empty(), format!("{routes} routes, mismatched {wrong:?}"));
    suite.check("slice-confinement", leaks == 0, format!("{leaks} of {rules} sliced flow rules leave their slice"));
}

struct RunCheck {
    conserved: bool,
    cross_slice: usize,
    tally_matches: bool,
}

fn matrix(suite: &mut Suite, cfg: &ScenarioConfig) {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let start = Instant::now();
    let runs = run_matrix_with(cfg, workers, |_, _, out| {
        let tally = LogTally::parse(&render_log(&out.log));
        let r = &out.report;
        let get = |k: &str| tally.drops.get(k).copied().unwrap_or(0);
        RunCheck {
            conserved: tally.generated == tally.delivered + tally.dropped() + r.in_flight,
            cross_slice: tally.collisions.iter().filter(|t| t.iter().collect::<BTreeSet<_>>().len() > 1).count(),
            tally_matches: tally.generated == r.sent
                && tally.delivered == r.received
                && get("dropped_collision") == r.drops.collision
                && get("dropped_retry") == r.drops.retry
                && get("dropped_queue") == r.drops.queue
                && get("dropped_no_route") == r.drops.no_route,
        }
    })
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!("matrix: {} runs in {elapsed:.1} s on {workers} threads", runs.len());

    let physical: Vec<_> = runs.iter().filter(|(r, _)| r.mode == SliceMode::Physical).collect();
    let cross: usize = physical.iter().map(|(_, c)| c.cross_slice).sum();
    suite.check(
        "channel-isolation",
        cross == 0,
        format!("{cross} cross-slice collisions over {} physical runs", physical.len()),
    );
    let broken = runs.iter().filter(|(_, c)| !(c.conserved && c.tally_matches)).count();
    suite.check("packet-conservation", broken == 0, format!("{broken} of {} runs fail the log recount", runs.len()));

    let rows: Vec<_> = runs.into_iter().map(|(r, _)| r).collect();
    let s = summarize(&rows);
    let mean = |d, m, r| s.mean(d, m, r).unwrap();
    let seeds = cfg.seed_list().len();

    let mut ordering = true;
    let mut detail = Vec::new();
    for &rate in &cfg.rates {
        for d in [Density::Ultra, Density::Extra] {
            let (non, log, phy) =
                (mean(d, SliceMode::NonSliced, rate), mean(d, SliceMode::Logical, rate), mean(d, SliceMode::Physical, rate));
            ordering &= phy - log >= 0.01 && log - non >= 0.01;
            detail.push(format!("{d}/{rate}: phy-log {:+.2} log-non {:+.2} pp", (phy - log) * 100.0, (log - non) * 100.0));
        }
    }
    let headline = mean(Density::Ultra, SliceMode::Physical, 10.0) - mean(Density::Ultra, SliceMode::NonSliced, 10.0);
    ordering &= headline >= 0.05;
    detail.push(format!("ultra/10 phy-non {:+.2} pp", headline * 100.0));
    suite.check("mode-ordering", ordering && seeds >= 5, format!("{seeds} seeds; {}", detail.join("; ")));

    let mut monotone = true;
    let mut detail = Vec::new();
    for &rate in &cfg.rates {
        for m in SliceMode::ALL {
            let series: Vec<f64> = Density::ALL.iter().map(|&d| mean(d, m, rate)).collect();
            let worst = series.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            monotone &= worst <= 0.01;
            detail.push(format!("{m}/{rate} worst step {:+.2} pp", worst * 100.0));
        }
    }
    let drop = |m| mean(Density::Medium, m, 6.0) - mean(Density::Ultra, m, 6.0);
    let (non_drop, phy_drop) = (drop(SliceMode::NonSliced), drop(SliceMode::Physical));
    detail.push(format!("6 pkt/min medium->ultra drop non {:.2} pp phy {:.2} pp", non_drop * 100.0, phy_drop * 100.0));
    suite.check("density-degradation", monotone && non_drop - phy_drop >= 0.02, detail.join("; "));

    let a = SliceId::new("A");
    let mut lowest = f64::INFINITY;
    for c in s.cells.iter().filter(|c| c.mode == SliceMode::Physical) {
        lowest = lowest.min(c.slice_means[&a]);
    }
    suite.check("slice-a-robustness", lowest >= 0.97, format!("lowest physical slice A mean {:.2}%", lowest * 100.0));
}

fn pdr_units(suite: &mut Suite) {
    let records: Vec<PacketRecord> = (0..100)
        .map(|i| PacketRecord {
            id: i,
            origin: NodeId(1),
            slice: SliceId::new("A"),
            generated_at: SimTime::ZERO,
            fate: if i < 97 { Fate::Delivered } else { Fate::DroppedRetry },
            hops: 1,
        })
        .collect();
    let r = compute_pdr(&records);
    let empty = compute_pdr(&[]);
    suite.check(
        "pdr-units",
        r.pdr == Some(0.97) && !r.undefined && empty.undefined && empty.pdr.is_none(),
        format!("97/100 -> {:?}, 0/0 -> undefined={}", r.pdr, empty.undefined),
    );
}

fn determinism(suite: &mut Suite, cfg: &ScenarioConfig) {
    let mut same = true;
    for mode in SliceMode::ALL {
        let cell = Cell { density: Density::Extra, mode, rate: 10.0 };
        let a = cfg.run_one(&cell, 3).unwrap();
        let b = cfg.run_one(&cell, 3).unwrap();
        same &= render_log(&a.log) == render_log(&b.log) && a.report == b.report;
    }
    suite.check("determinism", same, "extra/10 pkt/min seed 3 in every mode, logs and reports compared byte for byte");
}

fn main() {
    let cfg = ScenarioConfig::arena();
    let mut suite = Suite { failed: Vec::new() };
    codet(&mut suite);
    routing(&mut suite, &cfg);
    matrix(&mut suite, &cfg);
    pdr_units(&mut suite);
    determinism(&mut suite, &cfg);
    if suite.failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: {} failing: {}", suite.failed.len(), suite.failed.join(", "));
        std::process::exit(1);
    }
}
