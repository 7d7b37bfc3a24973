use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::rank;
use crate::model::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("topology needs at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("no suitable random geometric graph after {0} attempts")]
    AttemptsExhausted(usize),
    #[error("topology file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Undirected, loop-free, connected graph over a fixed node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adj: Vec<BTreeSet<usize>>,
}

impl Topology {
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, TopologyError> {
        if node_count < 2 {
            return Err(TopologyError::TooSmall(node_count));
        }
        let mut adj = vec![BTreeSet::new(); node_count];
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(TopologyError::EdgeOutOfRange(u, v, node_count));
            }
            if u == v {
                return Err(TopologyError::SelfLoop(u));
            }
            adj[u].insert(v);
            adj[v].insert(u);
        }
        let topo = Topology { adj };
        if !topo.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(topo)
    }

    /// Parses `n` on the first line followed by one `u v` pair per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (first, header) = lines.next().ok_or(TopologyError::Parse {
            line: 1,
            msg: "missing node count".into(),
        })?;
        let n: usize = header.parse().map_err(|_| TopologyError::Parse {
            line: first,
            msg: format!("bad node count `{header}`"),
        })?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [u, v] => u.parse().ok().zip(v.parse().ok()),
                _ => None,
            };
            let edge = parsed.ok_or_else(|| TopologyError::Parse {
                line,
                msg: format!("expected `u v`, got `{l}`"),
            })?;
            edges.push(edge);
        }
        Self::from_edges(n, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.node_count());
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[node].iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    /// Each undirected edge once, as `(lo, hi)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges().len() as f64 / self.node_count() as f64
    }

    /// Hop distance from every node to `target`.
    fn distances_to(&self, target: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[target] = 0;
        let mut queue = VecDeque::from([target]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn is_connected(&self) -> bool {
        self.distances_to(0).iter().all(|&d| d != usize::MAX)
    }

    /// Nodes that sit inside the selected path of at least one ordered
    /// pair. Only these ever appear in reports.
    pub fn transit_capable(&self) -> BTreeSet<NodeId> {
        let n = self.node_count();
        let mut out = BTreeSet::new();
        for s in 0..n {
            for d in 0..n {
                if s != d {
                    let path = select_path(self, NodeId(s), NodeId(d));
                    out.extend(path[1..path.len() - 1].iter().copied());
                }
            }
        }
        out
    }

    pub fn min_degree(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).min().unwrap_or(0)
    }

    /// True if the paths between all ordered source/destination pairs give a
    /// full-column-rank incidence matrix, i.e. every node's behavior can be
    /// pinned down from reports alone.
    pub fn is_identifiable(&self) -> bool {
        let n = self.node_count();
        let mut rows: BTreeSet<Vec<usize>> = BTreeSet::new();
        for s in 0..n {
            for d in 0..n {
                if s != d {
                    let path = select_path(self, NodeId(s), NodeId(d));
                    let interior: Vec<usize> =
                        path[1..path.len() - 1].iter().map(|x| x.0).collect();
                    if !interior.is_empty() {
                        rows.insert(interior);
                    }
                }
            }
        }
        let dense: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut row = vec![0.0; n];
                r.iter().for_each(|&j| row[j] = 1.0);
                row
            })
            .collect();
        rank(&dense, n) == n
    }
}

/// How to obtain a topology.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Fixed(Topology),
    /// Nodes placed uniformly in the unit square, linked when closer than
    /// `radius`. Redrawn until connected (and, if requested, identifiable
    /// under the path selection rule).
    RandomGeometric {
        nodes: usize,
        radius: f64,
        seed: u64,
        max_attempts: usize,
        require_identifiable: bool,
    },
}

impl TopologySpec {
    pub fn random(nodes: usize, mean_degree: f64, seed: u64) -> Self {
        TopologySpec::RandomGeometric {
            nodes,
            radius: radius_for_mean_degree(nodes, mean_degree),
            seed,
            max_attempts: 10_000,
            require_identifiable: false,
        }
    }
}

/// Connection radius giving roughly `mean_degree` neighbors in the unit
/// square. The factor offsets the edge effect of the square boundary.
pub fn radius_for_mean_degree(nodes: usize, mean_degree: f64) -> f64 {
    let base = (mean_degree / ((nodes.max(2) - 1) as f64 * std::f64::consts::PI)).sqrt();
    base * 1.15
}

pub fn build_topology(spec: &TopologySpec) -> Result<Topology, TopologyError> {
    match spec {
        TopologySpec::Fixed(t) => Ok(t.clone()),
        &TopologySpec::RandomGeometric {
            nodes,
            radius,
            seed,
            max_attempts,
            require_identifiable,
        } => {
            if nodes < 2 {
                return Err(TopologyError::TooSmall(nodes));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r2 = radius * radius;
            for _ in 0..max_attempts {
                let pts: Vec<(f64, f64)> = (0..nodes).map(|_| (rng.gen(), rng.gen())).collect();
                let mut edges = Vec::new();
                for u in 0..nodes {
                    for v in (u + 1)..nodes {
                        let (dx, dy) = (pts[u].0 - pts[v].0, pts[u].1 - pts[v].1);
                        if dx * dx + dy * dy <= r2 {
                            edges.push((u, v));
                        }
                    }
                }
                match Topology::from_edges(nodes, edges) {
                    Ok(t) if !require_identifiable || t.is_identifiable() => return Ok(t),
                    _ => continue,
                }
            }
            Err(TopologyError::AttemptsExhausted(max_attempts))
        }
    }
}

/// Shortest path by hop count from `source` to `dest`, inclusive of both
/// ends. Among equal-length paths the lexicographically smallest node
/// sequence wins.
pub fn select_path(topo: &Topology, source: NodeId, dest: NodeId) -> Vec<NodeId> {
    assert_ne!(source, dest, "source and destination must differ");
    let dist = topo.distances_to(dest.0);
    let mut path = vec![source];
    let mut cur = source.0;
    while cur != dest.0 {
        // neighbors iterate in ascending order
        cur = topo
            .neighbors(cur)
            .find(|&v| dist[v] + 1 == dist[cur])
            .expect("connected graph has a next hop");
        path.push(NodeId(cur));
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(p: &[NodeId]) -> Vec<usize> {
        p.iter().map(|n| n.0).collect()
    }

    /// All shortest paths by exhaustive DFS, for cross-checking tie-breaks.
    fn all_shortest(topo: &Topology, s: usize, d: usize) -> Vec<Vec<usize>> {
        fn walk(
            t: &Topology,
            cur: usize,
            d: usize,
            seen: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if cur == d {
                out.push(seen.clone());
                return;
            }
            for v in t.neighbors(cur) {
                if !seen.contains(&v) {
                    seen.push(v);
                    walk(t, v, d, seen, out);
                    seen.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(topo, s, d, &mut vec![s], &mut out);
        let best = out.iter().map(Vec::len).min().unwrap();
        out.retain(|p| p.len() == best);
        out.sort();
        out
    }

    #[test]
    fn adjacent_nodes_have_no_transit() {
        let t = Topology::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(ids(&select_path(&t, NodeId(0), NodeId(1))), vec![0, 1]);
    }

    #[test]
    fn line_graph_routes_through_middle() {
        let t = Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(ids(&select_path(&t, NodeId(0), NodeId(2))), vec![0, 1, 2]);
    }

    #[test]
    fn ties_pick_smallest_sequence() {
        // square 0-1-3, 0-2-3 plus a longer detour
        let t = Topology::from_edges(5, [(0, 2), (2, 3), (0, 1), (1, 3), (0, 4), (4, 3)]).unwrap();
        let path = ids(&select_path(&t, NodeId(0), NodeId(3)));
        assert_eq!(path, all_shortest(&t, 0, 3)[0]);
        assert_eq!(path, vec![0, 1, 3]);
        assert_eq!(ids(&select_path(&t, NodeId(3), NodeId(0))), vec![3, 1, 0]);
    }

    #[test]
    fn tie_break_matches_enumeration_on_random_graphs() {
        for seed in 0..5 {
            let t = build_topology(&TopologySpec::random(10, 4.0, seed)).unwrap();
            for s in 0..10 {
                for d in 0..10 {
                    if s != d {
                        let got = ids(&select_path(&t, NodeId(s), NodeId(d)));
                        assert_eq!(got, all_shortest(&t, s, d)[0]);
                    }
                }
            }
        }
    }

    #[test]
    fn random_geometric_is_deterministic_and_connected() {
        let spec = TopologySpec::random(15, 4.0, 42);
        let a = build_topology(&spec).unwrap();
        let b = build_topology(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.node_count(), 15);
        assert!(!a.transit_capable().is_empty());
        assert!(
            a.mean_degree() > 2.0 && a.mean_degree() < 8.0,
            "{}",
            a.mean_degree()
        );
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(
            Topology::from_edges(3, [(0, 1)]),
            Err(TopologyError::Disconnected)
        );
        assert_eq!(
            Topology::from_edges(3, [(0, 0)]),
            Err(TopologyError::SelfLoop(0))
        );
        assert!(matches!(
            Topology::from_edges(2, [(0, 5)]),
            Err(TopologyError::EdgeOutOfRange(..))
        ));
        assert!(Topology::from_edges(1, []).is_err());
    }

    #[test]
    fn fixed_spec_passes_through() {
        let t = Topology::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(build_topology(&TopologySpec::Fixed(t.clone())).unwrap(), t);
    }

    #[test]
    fn text_round_trip() {
        let t = Topology::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(Topology::parse(&t.to_text()).unwrap(), t);
        assert!(matches!(
            Topology::parse("3\n0 x\n"),
            Err(TopologyError::Parse { line: 2, .. })
        ));
        assert!(Topology::parse("").is_err());
    }

    #[test]
    fn line_graph_is_not_identifiable() {
        // end nodes never forward anything
        let t = Topology::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert!(!t.is_identifiable());
        assert_eq!(t.transit_capable(), [NodeId(1)].into());
        assert_eq!(t.min_degree(), 1);
    }

    #[test]
    fn ring_is_identifiable() {
        let t = Topology::from_edges(5, (0..5).map(|i| (i, (i + 1) % 5))).unwrap();
        assert_eq!(t.transit_capable().len(), 5);
        assert!(t.is_identifiable());
    }
}
