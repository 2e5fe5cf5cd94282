//! Graph workloads: loaders, DRAM layout, assembly programs and host oracles.
//!
//! Each builder renders an assembly template for a fixed node shape, lays the graph out
//! in a fresh DRAM image and returns a [`KernelBundle`] ready to simulate.

pub mod bfs;
pub mod graph;
pub mod js;
pub mod layout;
pub mod oracle;
pub mod pr;
pub mod tc;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{ConfigError, NodeConfig, ResultRegion, SimResult, Simulation};
use crate::isa::{assemble, AsmError, ProgramImage};
use crate::lane::Event;
use crate::memory::DramImage;


pub use graph::{load_graph, Format, Graph, GraphError};

pub use layout::{layout_graph, LayoutError, LayoutPlan};
pub use oracle::{oracle_bfs, oracle_js, oracle_pr, oracle_tc, oracle_tc_merge};

pub use bfs::build_bfs;
pub use js::build_js;
pub use pr::build_pr;
pub use tc::build_tc;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel source does not assemble: {0}")]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Param(String),
    #[error("template placeholder left unrendered: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kernel {
    Tc,
    TcCoarse,
    Bfs,
    Pr,
    Js,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [Kernel::Tc, Kernel::TcCoarse, Kernel::Bfs, Kernel::Pr, Kernel::Js];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Tc => "tc",
            Kernel::TcCoarse => "tc-coarse",
            Kernel::Bfs => "bfs",
            Kernel::Pr => "pr",
            Kernel::Js => "js",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| KernelError::Param(format!("unknown kernel {s:?}")))
    }
}

/// Decoded kernel output.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Triangles(u64),
    Distances(Vec<u64>),
    Ranks(Vec<f64>),
    /// Row-major `n x n` matrix.
    Jaccard(Vec<f64>),
}

impl Output {
    fn decode(kernel: Kernel, words: Vec<u64>) -> Output {
        match kernel {
            Kernel::Tc | Kernel::TcCoarse => Output::Triangles(words[0]),
            Kernel::Bfs => Output::Distances(words),
            Kernel::Pr => Output::Ranks(words.into_iter().map(f64::from_bits).collect()),
            Kernel::Js => Output::Jaccard(words.into_iter().map(f64::from_bits).collect()),
        }
    }

    /// Compares against the host oracle. PR is compared to within `1e-9` per component.
    pub fn check(&self, expected: &Output) -> Result<(), String> {
        match (self, expected) {
            (Output::Ranks(a), Output::Ranks(b)) => {
                if a.len() != b.len() {
                    return Err(format!("{} ranks, expected {}", a.len(), b.len()));
                }
                for (i, (x, y)) in a.iter().zip(b).enumerate() {
                    if !((x - y).abs() <= 1e-9) {
                        return Err(format!("rank[{i}] = {x}, expected {y}"));
                    }
                }
                Ok(())
            }
            (Output::Jaccard(a), Output::Jaccard(b)) => {
                for (i, (x, y)) in a.iter().zip(b).enumerate() {
                    if x.to_bits() != y.to_bits() {
                        return Err(format!("J[{i}] = {x}, expected {y}"));
                    }
                }
                if a.len() != b.len() {
                    return Err(format!("{} entries, expected {}", a.len(), b.len()));
                }
                Ok(())
            }
            (Output::Distances(a), Output::Distances(b)) => {
                match a.iter().zip(b).position(|(x, y)| x != y) {
                    Some(i) => Err(format!("dist[{i}] = {}, expected {}", a[i], b[i])),
                    None if a.len() != b.len() => Err(format!("{} distances, expected {}", a.len(), b.len())),
                    None => Ok(()),
                }
            }
            (a, b) if a == b => Ok(()),
            (a, b) => Err(format!("got {a:?}, expected {b:?}")),
        }
    }
}

/// Reference result for a kernel on `g`.
pub fn oracle(kernel: Kernel, g: &Graph, params: &KernelParams) -> Output {
    match kernel {
        Kernel::Tc | Kernel::TcCoarse => {
            Output::Triangles(if g.n() <= 400 { oracle_tc(g) } else { oracle_tc_merge(g) })
        }
        Kernel::Bfs => Output::Distances(oracle_bfs(g, params.source)),
        Kernel::Pr => Output::Ranks(oracle_pr(g, params.damping, params.iters)),
        Kernel::Js => {
            let n = g.n();
            let mut m = vec![0.0; n * n];
            for u in 0..n {
                for v in u + 1..n {
                    m[u * n + v] = oracle::jaccard(g, u, v);
                }
            }
            Output::Jaccard(m)
        }
    }
}

/// Builds `kernel` on `g` for the node shape of `cfg`.
pub fn build(kernel: Kernel, g: &Graph, params: &KernelParams, cfg: &NodeConfig) -> Result<KernelBundle, KernelError> {
    match kernel {
        Kernel::Tc => build_tc(g, cfg, false),
        Kernel::TcCoarse => build_tc(g, cfg, true),
        Kernel::Bfs => build_bfs(g, params.source, cfg),
        Kernel::Pr => build_pr(g, params.damping, params.iters, cfg),
        Kernel::Js => build_js(g, params.js_cache_words, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub source: usize,
    pub damping: f64,
    pub iters: usize,
    /// Largest neighbor list JS caches in scratchpad.
    pub js_cache_words: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { source: 0, damping: 0.85, iters: 10, js_cache_words: 1024 }
    }
}

/// A program, its DRAM image and launch events, for one node shape.
#[derive(Debug, Clone)]
pub struct KernelBundle {
    pub kernel: Kernel,
    pub source: String,
    pub program: ProgramImage,
    pub plan: LayoutPlan,
    pub dram: DramImage,
    pub boot: Vec<Event>,
    /// `(lane, byte address, value)` written to scratchpads before the run.
    pub scratch_init: Vec<(u32, u64, u64)>,
    pub result: Vec<ResultRegion>,
    pub accelerators: usize,
    pub lanes_per_accelerator: usize,
}

#[derive(Debug)]
pub struct KernelRun {
    pub result: SimResult,
    pub output: Output,
    pub sim: Simulation,
}

impl KernelBundle {
    /// Runs the bundle on `cfg`, whose shape must match the one the bundle was built for.
    pub fn simulate(&self, cfg: &NodeConfig) -> Result<KernelRun, KernelError> {
        if cfg.accelerators != self.accelerators || cfg.lanes_per_accelerator != self.lanes_per_accelerator {
            return Err(KernelError::Param(format!(
                "bundle built for {}x{} lanes, node is {}x{}",
                self.accelerators, self.lanes_per_accelerator, cfg.accelerators, cfg.lanes_per_accelerator
            )));
        }
        let mut sim = Simulation::new(cfg.clone(), &self.program, self.dram.clone())?;
        for &(lane, addr, v) in &self.scratch_init {
            sim.host_write_scratch(lane, addr, v).map_err(|e| KernelError::Param(e.to_string()))?;
        }
        for e in &self.boot {
            sim.boot(e.clone());
        }
        let result = sim.run();
        let words = match sim.host_collect(&self.result) {
            Ok(w) => w,
            Err(e) => return Err(KernelError::Param(e.to_string())),
        };
        Ok(KernelRun { output: Output::decode(self.kernel, words), result, sim })
    }
}

/// Splits a fragment file into named pieces. Each piece starts with a `#@NAME` line.
pub(crate) fn fragments(src: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut cur: Option<(String, String)> = None;
    for line in src.lines() {
        if let Some(name) = line.strip_prefix("#@") {
            if let Some((n, body)) = cur.take() {
                out.insert(n, body);
            }
            cur = Some((name.trim().to_string(), String::new()));
        } else if let Some((_, body)) = cur.as_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    if let Some((n, body)) = cur {
        out.insert(n, body);
    }
    out
}

/// Replaces `{KEY}` placeholders until none change, then checks that none remain.
pub(crate) fn render(template: &str, vars: &BTreeMap<String, String>) -> Result<String, KernelError> {
    let mut s = template.to_string();
    loop {
        let mut next = s.clone();
        for (k, v) in vars {
            next = next.replace(&format!("{{{k}}}"), v.trim_end_matches('\n'));
        }
        if next == s {
            break;
        }
        s = next;
    }
    if let Some(i) = s.find('{') {
        let end = s[i..].find('}').map(|j| i + j + 1).unwrap_or(s.len());
        return Err(KernelError::Template(s[i..end].to_string()));
    }
    Ok(s)
}

/// Assembles a rendered source.
pub(crate) fn finish(source: String) -> Result<(String, ProgramImage), KernelError> {
    let program = assemble(&source)?;
    Ok((source, program))
}

/// Prepends an `.event` line naming every handler defined in `src`.
pub(crate) fn with_event_list(src: &str) -> String {
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.strip_suffix(':'))
        .filter(|n| !n.starts_with('L') && !n.starts_with(char::is_whitespace) && !n.starts_with('#'))
        .collect();
    format!(".event {}\n{src}", names.join(", "))
}

pub(crate) fn check_shape(cfg: &NodeConfig) -> Result<(), KernelError> {
    cfg.check()?;
    if !cfg.lanes_per_accelerator.is_power_of_two() || !cfg.accelerators.is_power_of_two() {
        return Err(KernelError::Param("kernels need power-of-two lane and accelerator counts".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_nested_and_missing() {
        let mut v = BTreeMap::new();
        v.insert("A".to_string(), "x {B}".to_string());
        v.insert("B".to_string(), "y".to_string());
        assert_eq!(render("{A}!", &v).unwrap(), "x y!");
        assert!(matches!(render("{C}", &v), Err(KernelError::Template(t)) if t == "{C}"));
    }

    #[test]
    fn fragment_split() {
        let f = fragments("#@ONE\na\n#@TWO\nb\nc\n");
        assert_eq!(f["ONE"], "a\n");
        assert_eq!(f["TWO"], "b\nc\n");
    }
}
