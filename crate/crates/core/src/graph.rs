//! Small undirected graph primitives shared by the topology builders.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Unordered silo pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey(usize, usize);

impl EdgeKey {
    /// Panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loop edge ({a}, {a})");
        if a < b {
            EdgeKey(a, b)
        } else {
            EdgeKey(b, a)
        }
    }

    pub fn lo(self) -> usize {
        self.0
    }

    pub fn hi(self) -> usize {
        self.1
    }

    pub fn contains(self, v: usize) -> bool {
        self.0 == v || self.1 == v
    }

    /// The endpoint that is not `v`.
    pub fn other(self, v: usize) -> usize {
        if self.0 == v {
            self.1
        } else {
            self.0
        }
    }

    /// Both directed versions `(lo, hi)` and `(hi, lo)`.
    pub fn directions(self) -> [(usize, usize); 2] {
        [(self.0, self.1), (self.1, self.0)]
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

/// Symmetric weighted graph over `0..n`, dense adjacency. Missing entries are
/// absent edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<Option<f64>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph {
            n,
            weights: vec![None; n * n],
        }
    }

    /// Complete graph whose weights come from `f(i, j)` for `i < j`.
    pub fn complete(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = WeightedGraph::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set(i, j, f(i, j));
            }
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, i: usize, j: usize, w: f64) {
        assert_ne!(i, j, "self-loop edge ({i}, {i})");
        self.weights[i * self.n + j] = Some(w);
        self.weights[j * self.n + i] = Some(w);
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return None;
        }
        self.weights[i * self.n + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j).is_some()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Edges in ascending `(lo, hi)` order.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeKey, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n)
                .filter_map(move |j| self.weight(i, j).map(|w| (EdgeKey::new(i, j), w)))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn is_complete(&self) -> bool {
        self.edge_count() == self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_connected(&self) -> bool {
        first_unreachable(self.n, |v| self.neighbors(v).collect()).is_none()
    }

    /// True when every triangle satisfies `w(i,k) <= w(i,j) + w(j,k)` up to a
    /// relative slack of 1e-12. Only meaningful on complete graphs.
    pub fn is_metric(&self) -> bool {
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let (Some(ik), Some(ij), Some(jk)) =
                        (self.weight(i, k), self.weight(i, j), self.weight(j, k))
                    else {
                        continue;
                    };
                    if ik > (ij + jk) * (1.0 + 1e-12) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Total weight of `edges`; `None` if any edge is missing.
    pub fn total_weight<'a>(&self, edges: impl IntoIterator<Item = &'a EdgeKey>) -> Option<f64> {
        edges.into_iter().map(|e| self.weight(e.lo(), e.hi())).sum()
    }
}

/// Breadth-first search from node 0; returns the smallest node id that cannot
/// be reached, if any.
pub(crate) fn first_unreachable(
    n: usize,
    neighbors: impl Fn(usize) -> Vec<usize>,
) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for w in neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.iter().position(|s| !s)
}
