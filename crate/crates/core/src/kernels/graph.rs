//! Undirected graphs in CSR form, file loaders and synthetic generators.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph has no edges")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    EdgeList,
    Mtx,
}

impl Format {
    /// `.mtx` files are Matrix Market, everything else is an edge list.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") => Format::Mtx,
            _ => Format::EdgeList,
        }
    }
}

/// Simple undirected graph. Every edge is stored in both endpoint lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub row_offsets: Vec<usize>,
    pub neighbors: Vec<u64>,
    /// Self-loops dropped during normalization.
    pub self_loops_dropped: usize,
}

impl Graph {
    /// Builds a graph on `n` vertices, dropping self-loops and duplicate edges.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u64, u64)>) -> Graph {
        let mut adj: Vec<Vec<u64>> = vec![Vec::new(); n];
        let mut loops = 0;
        for (a, b) in edges {
            if a == b {
                loops += 1;
                continue;
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        row_offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            row_offsets.push(neighbors.len());
        }
        Graph { row_offsets, neighbors, self_loops_dropped: loops }
    }

    pub fn n(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Undirected edge count.
    pub fn m(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|v| self.degree(v)).collect()
    }

    pub fn adj(&self, v: usize) -> &[u64] {
        &self.neighbors[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.n()).flat_map(move |v| self.adj(v).iter().filter(move |&&u| u > v as u64).map(move |&u| (v as u64, u)))
    }

    pub fn complete(n: usize) -> Graph {
        Graph::from_edges(n, (0..n as u64).flat_map(|a| (a + 1..n as u64).map(move |b| (a, b))))
    }

    pub fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n as u64).map(|b| (b - 1, b)))
    }

    pub fn ring(n: usize) -> Graph {
        Graph::from_edges(n, (0..n as u64).map(|a| (a, (a + 1) % n as u64)))
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves as u64).map(|b| (0, b)))
    }

    /// Erdos-Renyi style graph with `m` edge draws (duplicates and loops dropped).
    pub fn random(n: usize, m: usize, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(u64, u64)> = (0..m).map(|_| (rng.gen_range(0..n as u64), rng.gen_range(0..n as u64))).collect();
        Graph::from_edges(n, edges)
    }

    /// Chung-Lu graph with expected degrees following a power law of exponent `gamma`.
    /// Vertex ids are randomly permuted so degree is uncorrelated with id.
    pub fn power_law(n: usize, m: usize, gamma: f64, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-1.0 / (gamma - 1.0))).collect();
        let total: f64 = w.iter().sum();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for x in &w {
            acc += x / total;
            cdf.push(acc);
        }
        let pick = |rng: &mut ChaCha8Rng| {
            let r: f64 = rng.gen();
            cdf.partition_point(|&c| c < r).min(n - 1) as u64
        };
        let mut perm: Vec<u64> = (0..n as u64).collect();
        perm.shuffle(&mut rng);
        let edges: Vec<(u64, u64)> =
            (0..m).map(|_| (perm[pick(&mut rng) as usize], perm[pick(&mut rng) as usize])).collect();
        Graph::from_edges(n, edges)
    }
}

/// Reads a graph file; vertex ids are compacted to `0..n` in ascending order of the original id.
pub fn load_graph(path: &Path, format: Format) -> Result<Graph, GraphError> {
    parse_graph(&fs::read_to_string(path)?, format)
}

pub fn parse_graph(text: &str, format: Format) -> Result<Graph, GraphError> {
    let mut pairs = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if format == Format::Mtx {
            if t.starts_with("%%MatrixMarket") {
                let lower = t.to_ascii_lowercase();
                if !lower.contains("coordinate") {
                    return Err(GraphError::Parse { line, msg: "only coordinate matrices are supported".into() });
                }
                continue;
            }
            if t.starts_with('%') || t.is_empty() {
                continue;
            }
            if !header_seen {
                // rows cols nnz
                header_seen = true;
                continue;
            }
        } else if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next = |what: &str| -> Result<u64, GraphError> {
            let tok = it.next().ok_or_else(|| GraphError::Parse { line, msg: format!("missing {what} vertex") })?;
            tok.parse::<u64>().map_err(|_| GraphError::Parse { line, msg: format!("bad vertex id `{tok}`") })
        };
        let a = next("source")?;
        let b = next("target")?;
        pairs.push((a, b));
    }
    if pairs.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut ids: BTreeMap<u64, u64> = BTreeMap::new();
    for &(a, b) in &pairs {
        ids.insert(a, 0);
        ids.insert(b, 0);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i as u64;
    }
    let n = ids.len();
    Ok(Graph::from_edges(n, pairs.into_iter().map(|(a, b)| (ids[&a], ids[&b]))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_from_edge_list() {
        let g = parse_graph("0 1\n1 2\n0 2\n", Format::EdgeList).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.degrees(), vec![2, 2, 2]);
    }

    #[test]
    fn duplicates_and_loops() {
        let g = parse_graph("0 1\n1 0\n", Format::EdgeList).unwrap();
        assert_eq!(g.m(), 1);
        let g = parse_graph("# c\n3 3\n3 4\n", Format::EdgeList).unwrap();
        assert_eq!((g.n(), g.m(), g.self_loops_dropped), (2, 1, 1));
    }

    #[test]
    fn matrix_market() {
        let text = "%%MatrixMarket matrix coordinate pattern symmetric\n% note\n3 3 3\n1 2\n2 3\n1 3\n";
        let g = parse_graph(text, Format::Mtx).unwrap();
        assert_eq!((g.n(), g.m()), (3, 3));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = parse_graph("0 1\n1 x\n", Format::EdgeList).unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
        assert!(matches!(parse_graph("# nothing\n", Format::EdgeList), Err(GraphError::Empty)));
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(Graph::random(100, 300, 7), Graph::random(100, 300, 7));
        let g = Graph::power_law(500, 3000, 2.1, 1);
        let d = g.degrees();
        assert!(g.max_degree() > 5 * (d.iter().sum::<usize>() / d.len()));
    }
}
