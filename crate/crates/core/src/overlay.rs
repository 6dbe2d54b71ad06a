//! Overlay construction: the Christofides ring that seeds the multigraph,
//! plus the STAR and MST baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{first_unreachable, EdgeKey, WeightedGraph};

/// Odd-vertex sets up to this size are matched exactly.
const EXACT_MATCHING_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum OverlayError {
    #[error("Christofides requires complete metric graph")]
    NotComplete,
    #[error("{kind} overlay needs at least {min} silos, got {got}")]
    TooFewNodes {
        kind: OverlayKind,
        min: usize,
        got: usize,
    },
    #[error("connectivity graph is disconnected: silo {0} unreachable")]
    Disconnected(usize),
    #[error("no silo is linked to every other silo; a star cannot be formed")]
    NoStarHub,
    #[error("overlay invariant violated: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayKind {
    Ring,
    Star,
    Mst,
    Custom,
}

impl fmt::Display for OverlayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlayKind::Ring => "ring",
            OverlayKind::Star => "star",
            OverlayKind::Mst => "mst",
            OverlayKind::Custom => "custom",
        })
    }
}

impl FromStr for OverlayKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(OverlayKind::Ring),
            "star" => Ok(OverlayKind::Star),
            "mst" => Ok(OverlayKind::Mst),
            "custom" => Ok(OverlayKind::Custom),
            other => Err(format!("unknown overlay kind `{other}`")),
        }
    }
}

/// Connected simple subgraph of the connectivity used for message exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayGraph {
    n: usize,
    edges: BTreeSet<EdgeKey>,
    kind: OverlayKind,
    metric_warning: bool,
}

impl OverlayGraph {
    /// Builds an overlay and checks the invariants of `kind`.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = EdgeKey>,
        kind: OverlayKind,
    ) -> Result<Self, OverlayError> {
        let g = OverlayGraph {
            n,
            edges: edges.into_iter().collect(),
            kind,
            metric_warning: false,
        };
        g.check()?;
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<EdgeKey> {
        &self.edges
    }

    pub fn kind(&self) -> OverlayKind {
        self.kind
    }

    /// Set when a ring was built on a graph violating the triangle
    /// inequality; the 1.5 approximation bound does not apply then.
    pub fn metric_warning(&self) -> bool {
        self.metric_warning
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.contains(v))
            .map(|e| e.other(v))
            .collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.contains(v)).count()
    }

    pub fn total_weight(&self, conn: &WeightedGraph) -> Option<f64> {
        conn.total_weight(&self.edges)
    }

    /// Checks every structural invariant of the overlay's kind.
    pub fn check(&self) -> Result<(), OverlayError> {
        let bad = |m: String| Err(OverlayError::Invalid(m));
        for e in &self.edges {
            if e.hi() >= self.n {
                return bad(format!("edge {e} references silo outside 0..{}", self.n));
            }
        }
        if let Some(v) = first_unreachable(self.n, |v| self.neighbors(v)) {
            return bad(format!("not connected: silo {v} unreachable"));
        }
        let n = self.n;
        match self.kind {
            OverlayKind::Ring => {
                if let Some(v) = (0..n).find(|&v| self.degree(v) != 2) {
                    return bad(format!("ring silo {v} has degree {}", self.degree(v)));
                }
                // connected + 2-regular means a single Hamiltonian cycle
                if self.edges.len() != n {
                    return bad(format!("ring has {} edges for {n} silos", self.edges.len()));
                }
            }
            OverlayKind::Star => {
                let hubs = (0..n).filter(|&v| self.degree(v) == n - 1).count();
                let leaves = (0..n).filter(|&v| self.degree(v) == 1).count();
                let ok = if n == 2 {
                    self.edges.len() == 1
                } else {
                    hubs == 1 && leaves == n - 1
                };
                if !ok {
                    return bad("star needs one hub of degree N-1 and N-1 leaves".into());
                }
            }
            OverlayKind::Mst => {
                // connected with N-1 edges is a tree
                if self.edges.len() + 1 != n {
                    return bad(format!("tree has {} edges for {n} silos", self.edges.len()));
                }
            }
            OverlayKind::Custom => {}
        }
        Ok(())
    }

    /// Checks that every overlay edge exists in the connectivity graph.
    pub fn check_subgraph_of(&self, conn: &WeightedGraph) -> Result<(), OverlayError> {
        match self.edges.iter().find(|e| !conn.has_edge(e.lo(), e.hi())) {
            Some(e) => Err(OverlayError::Invalid(format!(
                "edge {e} is not in the connectivity graph"
            ))),
            None => Ok(()),
        }
    }
}

/// Prim's algorithm from node 0. Among equal-weight candidates the smaller
/// `(min id, max id)` edge wins.
fn prim(conn: &WeightedGraph) -> Result<Vec<EdgeKey>, OverlayError> {
    let n = conn.node_count();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut tree = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut best: Option<(f64, EdgeKey, usize)> = None;
        for u in (0..n).filter(|&u| in_tree[u]) {
            for v in (0..n).filter(|&v| !in_tree[v]) {
                let Some(w) = conn.weight(u, v) else { continue };
                let key = EdgeKey::new(u, v);
                let better = match best {
                    None => true,
                    Some((bw, bk, _)) => w < bw || (w == bw && key < bk),
                };
                if better {
                    best = Some((w, key, v));
                }
            }
        }
        let (_, key, v) = best.ok_or_else(|| {
            OverlayError::Disconnected(in_tree.iter().position(|t| !t).unwrap_or(0))
        })?;
        in_tree[v] = true;
        tree.push(key);
    }
    Ok(tree)
}

/// Minimum spanning tree overlay.
pub fn build_mst(conn: &WeightedGraph) -> Result<OverlayGraph, OverlayError> {
    let tree = prim(conn)?;
    OverlayGraph::from_edges(conn.node_count(), tree, OverlayKind::Mst)
}

/// Star overlay around the minimax centre: the silo whose largest delay to
/// any other silo is smallest, lowest id on ties. Only silos linked to all
/// others qualify.
pub fn build_star(conn: &WeightedGraph) -> Result<OverlayGraph, OverlayError> {
    let n = conn.node_count();
    if n < 2 {
        return Err(OverlayError::TooFewNodes {
            kind: OverlayKind::Star,
            min: 2,
            got: n,
        });
    }
    let mut best: Option<(f64, usize)> = None;
    for hub in 0..n {
        let eccentricity = (0..n)
            .filter(|&v| v != hub)
            .map(|v| conn.weight(hub, v))
            .try_fold(f64::NEG_INFINITY, |acc, w| w.map(|w| acc.max(w)));
        if let Some(ecc) = eccentricity {
            if best.is_none_or(|(b, _)| ecc < b) {
                best = Some((ecc, hub));
            }
        }
    }
    let (_, hub) = best.ok_or(OverlayError::NoStarHub)?;
    let edges = (0..n).filter(|&v| v != hub).map(|v| EdgeKey::new(hub, v));
    OverlayGraph::from_edges(n, edges, OverlayKind::Star)
}

/// Ring overlay from the Christofides tour.
pub fn build_ring(conn: &WeightedGraph) -> Result<OverlayGraph, OverlayError> {
    let tour = christofides_tour(conn)?;
    let n = tour.len();
    let edges = (0..n).map(|i| EdgeKey::new(tour[i], tour[(i + 1) % n]));
    let mut g = OverlayGraph::from_edges(n, edges, OverlayKind::Ring)?;
    g.metric_warning = !conn.is_metric();
    Ok(g)
}

/// Hamiltonian cycle as a visiting order starting at node 0: Prim MST,
/// minimum-weight perfect matching on odd-degree vertices, Euler circuit,
/// then shortcutting to first visits.
pub fn christofides_tour(conn: &WeightedGraph) -> Result<Vec<usize>, OverlayError> {
    let n = conn.node_count();
    if n < 3 {
        return Err(OverlayError::TooFewNodes {
            kind: OverlayKind::Ring,
            min: 3,
            got: n,
        });
    }
    if !conn.is_complete() {
        return Err(OverlayError::NotComplete);
    }
    let w = |a: usize, b: usize| conn.weight(a, b).expect("complete graph");

    let tree = prim(conn)?;
    let mut degree = vec![0usize; n];
    for e in &tree {
        degree[e.lo()] += 1;
        degree[e.hi()] += 1;
    }
    let odd: Vec<usize> = (0..n).filter(|&v| degree[v] % 2 == 1).collect();
    let matching = if odd.len() <= EXACT_MATCHING_LIMIT {
        exact_matching(&odd, &w)
    } else {
        greedy_two_opt_matching(&odd, &w)
    };

    let mut multi: Vec<(usize, usize)> = tree.iter().map(|e| (e.lo(), e.hi())).collect();
    multi.extend(matching);
    let circuit = euler_circuit(n, &multi, 0);

    let mut seen = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    for v in circuit {
        if !seen[v] {
            seen[v] = true;
            tour.push(v);
        }
    }
    debug_assert_eq!(tour.len(), n);
    Ok(tour)
}

/// Exact minimum-weight perfect matching by memoized enumeration over
/// subsets: the lowest unmatched vertex is paired with each candidate in
/// ascending order, and only strict improvements replace the incumbent.
fn exact_matching(odd: &[usize], w: &impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let m = odd.len();
    if m == 0 {
        return Vec::new();
    }
    let full = (1usize << m) - 1;
    // best[mask] = (cost, partner of lowest set bit) for the vertices in mask
    let mut best: Vec<Option<(f64, usize)>> = vec![None; 1 << m];
    best[0] = Some((0.0, usize::MAX));
    for mask in 1..=full {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut incumbent: Option<(f64, usize)> = None;
        for j in (i + 1)..m {
            if rest & (1 << j) == 0 {
                continue;
            }
            let sub = best[rest & !(1 << j)].expect("even subsets filled first").0;
            let cost = w(odd[i], odd[j]) + sub;
            if incumbent.is_none_or(|(c, _)| cost < c) {
                incumbent = Some((cost, j));
            }
        }
        best[mask] = incumbent;
    }
    let mut pairs = Vec::with_capacity(m / 2);
    let mut mask = full;
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        let (_, j) = best[mask].expect("reachable mask");
        pairs.push((odd[i], odd[j]));
        mask &= !(1 << i) & !(1 << j);
    }
    pairs
}

/// Greedy cheapest-pair matching refined by pairwise 2-opt swaps.
fn greedy_two_opt_matching(odd: &[usize], w: &impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (a, &u) in odd.iter().enumerate() {
        for &v in &odd[a + 1..] {
            candidates.push((w(u, v), u, v));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut matched: BTreeMap<usize, bool> = odd.iter().map(|&v| (v, false)).collect();
    let mut pairs = Vec::with_capacity(odd.len() / 2);
    for (_, u, v) in candidates {
        if !matched[&u] && !matched[&v] {
            matched.insert(u, true);
            matched.insert(v, true);
            pairs.push((u, v));
        }
    }

    let eps = 1e-12;
    loop {
        let mut improved = false;
        for p in 0..pairs.len() {
            for q in (p + 1)..pairs.len() {
                let (a, b) = pairs[p];
                let (c, d) = pairs[q];
                let current = w(a, b) + w(c, d);
                let alt1 = w(a, c) + w(b, d);
                let alt2 = w(a, d) + w(b, c);
                if alt1 + eps < current && alt1 <= alt2 {
                    pairs[p] = (a, c);
                    pairs[q] = (b, d);
                    improved = true;
                } else if alt2 + eps < current {
                    pairs[p] = (a, d);
                    pairs[q] = (b, c);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    pairs
}

/// Hierholzer's algorithm on an undirected multigraph where every vertex
/// has even degree. Unused edges are taken in ascending (neighbour, edge id)
/// order so the circuit is deterministic.
fn euler_circuit(n: usize, edges: &[(usize, usize)], start: usize) -> Vec<usize> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (id, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, id));
        adj[b].push((a, id));
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let mut used = vec![false; edges.len()];
    let mut cursor = vec![0usize; n];
    let mut stack = vec![start];
    let mut circuit = Vec::with_capacity(edges.len() + 1);
    while let Some(&v) = stack.last() {
        let list = &adj[v];
        while cursor[v] < list.len() && used[list[cursor[v]].1] {
            cursor[v] += 1;
        }
        if cursor[v] == list.len() {
            circuit.push(v);
            stack.pop();
        } else {
            let (to, id) = list[cursor[v]];
            used[id] = true;
            stack.push(to);
        }
    }
    circuit.reverse();
    circuit
}
