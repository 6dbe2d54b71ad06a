#![allow(dead_code)]

use std::path::PathBuf;

use fedmesh::graph::{EdgeKey, WeightedGraph};
use fedmesh::net_model::{self, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> NetworkSpec {
    net_model::load_network(fixture(name)).unwrap()
}

/// Complete Euclidean graph on `n` random points in the unit square.
pub fn random_metric(n: usize, rng: &mut ChaCha8Rng) -> WeightedGraph {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    WeightedGraph::complete(n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (dx * dx + dy * dy).sqrt()
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tour_cost(g: &WeightedGraph, tour: &[usize]) -> f64 {
    (0..tour.len())
        .map(|k| g.weight(tour[k], tour[(k + 1) % tour.len()]).unwrap())
        .sum()
}

/// Exhaustive optimum over all tours starting at node 0.
pub fn brute_force_tsp(g: &WeightedGraph) -> f64 {
    fn go(g: &WeightedGraph, path: &mut Vec<usize>, used: &mut [bool], cost: f64, best: &mut f64) {
        let n = used.len();
        let last = *path.last().unwrap();
        if path.len() == n {
            *best = best.min(cost + g.weight(last, 0).unwrap());
            return;
        }
        for v in 1..n {
            if !used[v] {
                used[v] = true;
                path.push(v);
                go(g, path, used, cost + g.weight(last, v).unwrap(), best);
                path.pop();
                used[v] = false;
            }
        }
    }
    let n = g.node_count();
    let mut used = vec![false; n];
    used[0] = true;
    let mut best = f64::INFINITY;
    go(g, &mut vec![0], &mut used, 0.0, &mut best);
    best
}

/// Minimum spanning tree weight by Kruskal with a naive union-find.
pub fn kruskal_weight(g: &WeightedGraph) -> f64 {
    let mut edges: Vec<(EdgeKey, f64)> = g.edges().collect();
    edges.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut parent: Vec<usize> = (0..g.node_count()).collect();
    fn find(p: &mut [usize], v: usize) -> usize {
        if p[v] == v {
            v
        } else {
            let r = find(p, p[v]);
            p[v] = r;
            r
        }
    }
    let mut total = 0.0;
    for (e, w) in edges {
        let (a, b) = (find(&mut parent, e.lo()), find(&mut parent, e.hi()));
        if a != b {
            parent[a] = b;
            total += w;
        }
    }
    total
}

pub fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm_all(values: impl IntoIterator<Item = u64>) -> u64 {
    values.into_iter().fold(1, |l, v| l / gcd(l, v) * v)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}
