//! Host-side reference implementations.

use std::collections::VecDeque;

use super::graph::Graph;

/// Distance value for unreachable vertices.
pub const INF: u64 = u64::MAX;

/// Triangle count by enumerating every vertex triple `a < b < c`.
pub fn oracle_tc(g: &Graph) -> u64 {
    let n = g.n();
    let mut dense = vec![false; n * n];
    for (a, b) in g.edges() {
        dense[a as usize * n + b as usize] = true;
        dense[b as usize * n + a as usize] = true;
    }
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            if !dense[a * n + b] {
                continue;
            }
            for c in b + 1..n {
                if dense[a * n + c] && dense[b * n + c] {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Triangle count by sorted-list merging, for graphs too large for the triple loop.
pub fn oracle_tc_merge(g: &Graph) -> u64 {
    let mut count = 0;
    for v in 0..g.n() {
        for &u in g.adj(v).iter().filter(|&&u| u > v as u64) {
            let (a, b) = (g.adj(v), g.adj(u as usize));
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if a[i] > u {
                            count += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    count
}

pub fn oracle_bfs(g: &Graph, src: usize) -> Vec<u64> {
    let mut dist = vec![INF; g.n()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(v) = q.pop_front() {
        for &u in g.adj(v) {
            if dist[u as usize] == INF {
                dist[u as usize] = dist[v] + 1;
                q.push_back(u as usize);
            }
        }
    }
    dist
}

/// Synchronous power iteration starting from uniform ranks. Mass of zero-degree vertices
/// is dropped.
pub fn oracle_pr(g: &Graph, d: f64, iters: usize) -> Vec<f64> {
    let n = g.n();
    let base = (1.0 - d) / n as f64;
    let mut rank = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        let mut acc = vec![0.0f64; n];
        for v in 0..n {
            let deg = g.degree(v);
            if deg == 0 {
                continue;
            }
            let share = rank[v] / deg as f64;
            for &u in g.adj(v) {
                acc[u as usize] += share;
            }
        }
        rank = acc.iter().map(|a| base + d * a).collect();
    }
    rank
}

/// `|N(u) ∩ N(v)|`.
pub fn common_neighbors(g: &Graph, u: usize, v: usize) -> u64 {
    let (a, b) = (g.adj(u), g.adj(v));
    a.iter().filter(|x| b.binary_search(x).is_ok()).count() as u64
}

/// Dense `n x n` Jaccard matrix. `J(u,u)` is 1 when `u` has neighbors and 0 otherwise.
pub fn oracle_js(g: &Graph) -> Vec<f64> {
    let n = g.n();
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            out[u * n + v] = jaccard(g, u, v);
        }
    }
    out
}

pub fn jaccard(g: &Graph, u: usize, v: usize) -> f64 {
    let i = common_neighbors(g, u, v);
    let denom = (g.degree(u) + g.degree(v)) as u64 - i;
    if denom == 0 {
        0.0
    } else {
        i as f64 / denom as f64
    }
}
