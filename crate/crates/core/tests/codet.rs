mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use meshslice::codet::{detect, path_exists, schedule_checks, CheckScheduler, Strategy};
use meshslice::topology::NodeId;
use meshslice::{SimTime, SliceId};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn detect_matches_union_find(n in 2usize..120, range in 2.0..15.0f64, seed in 0u64..10_000, t in 0usize..120) {
        let (_, g) = common::random_geometric(n, 50.0, range, seed);
        let target = NodeId((t % n) as u32);
        let oracle = common::union_find_disconnected(&g, target);
        prop_assert_eq!(&detect(&g, target, Strategy::ReverseBfs).unwrap(), &oracle);
        prop_assert_eq!(&detect(&g, target, Strategy::PerNodeBfs).unwrap(), &oracle);
    }

    #[test]
    fn path_exists_matches_dfs(n in 2usize..80, seed in 0u64..10_000, a in 0usize..80, b in 0usize..80) {
        let (_, g) = common::random_geometric(n, 40.0, 8.0, seed);
        let (a, b) = (NodeId((a % n) as u32), NodeId((b % n) as u32));
        prop_assert_eq!(path_exists(&g, a, b).unwrap(), common::dfs_reachable(&g, a).contains(&b));
    }

    #[test]
    fn removing_an_edge_never_reconnects(n in 3usize..60, seed in 0u64..10_000, pick in 0usize..1000) {
        let (_, mut g) = common::random_geometric(n, 30.0, 9.0, seed);
        let edges: Vec<_> = g.edges().collect();
        prop_assume!(!edges.is_empty());
        let before = detect(&g, NodeId(0), Strategy::ReverseBfs).unwrap();
        let (u, v) = edges[pick % edges.len()];
        g.remove_edge(u, v);
        let after = detect(&g, NodeId(0), Strategy::ReverseBfs).unwrap();
        prop_assert!(before.iter().all(|n| after.contains(n)));
    }
}

#[test]
fn report_timestamps_follow_interval_changes() {
    let (_, g) = common::random_geometric(30, 20.0, 10.0, 3);
    let slices: BTreeMap<_, _> = [(SliceId::new("A"), (g, NodeId(0)))].into();
    let mut s = CheckScheduler::new(Duration::from_secs(600)).unwrap();
    s.poll(SimTime::from_secs(1800), &slices).unwrap();
    s.set_interval(Duration::from_secs(120)).unwrap();
    s.poll(SimTime::from_secs(2400), &slices).unwrap();
    let times: Vec<u64> = s.reports().map(|r| r.checked_at.as_nanos() / 1_000_000_000).collect();
    let deltas: Vec<u64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    assert_eq!(deltas, vec![600, 600, 120, 120, 120, 120, 120]);
}

#[test]
fn default_cadence_over_a_run() {
    let (_, g) = common::random_geometric(10, 5.0, 10.0, 1);
    let slices: BTreeMap<_, _> = [(SliceId::new("A"), (g.clone(), NodeId(0))), (SliceId::new("B"), (g, NodeId(1)))].into();
    let reports = schedule_checks(&slices, meshslice::codet::DEFAULT_CHECK_INTERVAL, Duration::from_secs(1800)).unwrap();
    assert_eq!(reports.len(), 6);
}
