#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use meshslice::topology::{derive_connectivity, ConnectivityGraph, NodeId, NodeRecord, Position};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random geometric graph: `n` points in a square of side `side`.
pub fn random_geometric(n: usize, side: f64, range: f64, seed: u64) -> (Vec<NodeRecord>, ConnectivityGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<NodeRecord> = (0..n)
        .map(|i| NodeRecord::sensor(i as u32, Position::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)), "r"))
        .collect();
    let g = derive_connectivity(&nodes, range);
    (nodes, g)
}

/// Union-find components; independent of any BFS in the crate.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Nodes outside `target`'s component, via union-find over the edge list.
pub fn union_find_disconnected(g: &ConnectivityGraph, target: NodeId) -> Vec<NodeId> {
    let ids: Vec<NodeId> = g.nodes().collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for (u, v) in g.edges() {
        uf.union(index[&u], index[&v]);
    }
    let root = uf.find(index[&target]);
    ids.iter().copied().filter(|n| uf.find(index[n]) != root).collect()
}

/// Iterative DFS reachability set.
pub fn dfs_reachable(g: &ConnectivityGraph, start: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        for m in g.neighbors(n) {
            if seen.insert(m) {
                stack.push(m);
            }
        }
    }
    seen
}

/// Plain BFS distance oracle written against the adjacency only.
pub fn bfs_distance(g: &ConnectivityGraph, from: NodeId, to: NodeId) -> Option<usize> {
    let mut dist = BTreeMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            return dist.get(&n).copied();
        }
        let d = dist[&n];
        for m in g.neighbors(n) {
            dist.entry(m).or_insert_with(|| {
                queue.push_back(m);
                d + 1
            });
        }
    }
    None
}

/// Counts per-packet outcomes from a rendered event log.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LogTally {
    pub generated: u64,
    pub delivered: u64,
    pub drops: BTreeMap<String, u64>,
    pub collisions: Vec<Vec<String>>,
}

impl LogTally {
    pub fn parse(text: &str) -> Self {
        let mut t = LogTally::default();
        for line in text.lines() {
            let f: Vec<&str> = line.splitn(7, ' ').collect();
            assert_eq!(f.len(), 7, "malformed log line {line:?}");
            match f[1] {
                "generate" => t.generated += 1,
                "rx" if f[6].ends_with("delivered") => t.delivered += 1,
                "drop" => *t.drops.entry(f[6].to_string()).or_default() += 1,
                "collision" => {
                    let tags = f[6].strip_prefix("slices=").expect("collision tag");
                    t.collisions.push(tags.split(',').map(str::to_string).collect());
                }
                _ => {}
            }
        }
        t
    }

    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }
}
