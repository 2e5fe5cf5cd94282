//! Run configuration files.
//!
//! A run spec is TOML. Top-level keys pick the work: `kernel` with a `graph` file or a
//! `[generator]` table, or a `program` assembly file with `[[boot]]` entries. `[node]`
//! mirrors `NodeConfig` (with `[node.memory]` and `[node.mechanisms]`), `[params]` mirrors
//! `KernelParams`. Every leaf can be overridden by name, see [`RunSpec::set`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ablation::{apply_ablation, AblationConfig, AblationError};
use crate::fabric::NodeConfig;
use crate::isa::{assemble, AsmError, ProgramImage};
use crate::kernels::{load_graph, Format, Graph, GraphError, Kernel, KernelError, KernelParams};
use crate::lane::{Event, EventWord, Source};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad run spec: {0}")]
    Toml(String),
    #[error("unknown setting {0:?}")]
    UnknownKey(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Ablation(#[from] AblationError),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// `random`, `power_law`, `complete`, `path`, `ring` or `star`.
    pub kind: String,
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    2.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootSpec {
    pub lane: u32,
    pub label: String,
    #[serde(default)]
    pub operands: Vec<u64>,
    /// Raw continuation word; none means no continuation.
    pub continuation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub kernel: Option<String>,
    pub graph: Option<PathBuf>,
    pub generator: Option<GeneratorSpec>,
    /// Seed for the generator only; simulation has no randomness.
    pub seed: u64,
    pub ablation: Option<String>,
    pub output: Option<PathBuf>,
    pub program: Option<PathBuf>,
    pub boot: Vec<BootSpec>,
    pub params: KernelParams,
    pub node: NodeConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            kernel: None,
            graph: None,
            generator: None,
            seed: 1,
            ablation: None,
            output: None,
            program: None,
            boot: Vec::new(),
            params: KernelParams::default(),
            node: NodeConfig::default(),
        }
    }
}

/// What a resolved spec runs.
#[derive(Debug, Clone)]
pub enum Job {
    Kernel { kernel: Kernel, graph: Graph, params: KernelParams },
    Program { program: ProgramImage, boot: Vec<Event> },
}

#[derive(Debug, Clone)]
pub struct Resolved {
    /// Node with the ablation point applied.
    pub node: NodeConfig,
    pub ablation: AblationConfig,
    pub job: Job,
    pub output: Option<PathBuf>,
}

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Toml(e.to_string()))
    }

    /// Reads a spec file. Relative paths inside it are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = fs::read_to_string(path).map_err(|source| SpecError::Io { path: path.to_path_buf(), source })?;
        let mut spec = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut spec.graph, &mut spec.program, &mut spec.output].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run specs serialize")
    }

    /// Sets one leaf. `key` is a dotted path (`node.memory.latency_cycles`) or a bare
    /// name, which is looked up at the top level, then in `node`, `node.memory`,
    /// `node.mechanisms`, `params` and `generator`. Dashes count as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SpecError> {
        let key = key.replace('-', "_");
        let leaf = key.strip_prefix("generator.").unwrap_or(&key);
        if self.generator.is_none() && ["kind", "n", "m", "gamma"].contains(&leaf) {
            self.generator = Some(GeneratorSpec { kind: "random".into(), n: 0, m: 0, gamma: default_gamma() });
        }
        let mut root = toml::Value::try_from(&*self).map_err(|e| SpecError::Toml(e.to_string()))?;
        let path: Vec<String> = if key.contains('.') {
            key.split('.').map(str::to_string).collect()
        } else {
            let known = |v: &toml::Value, p: &[&str]| {
                let mut t = v;
                for s in p {
                    match t.get(s) {
                        Some(x) => t = x,
                        None => return false,
                    }
                }
                t.get(&key).is_some() || known_optional(p, &key)
            };
            let scopes: [&[&str]; 6] = [&[], &["node"], &["node", "memory"], &["node", "mechanisms"], &["params"], &["generator"]];
            let scope = scopes.iter().find(|p| known(&root, p)).ok_or_else(|| SpecError::UnknownKey(key.clone()))?;
            scope.iter().map(|s| s.to_string()).chain([key.clone()]).collect()
        };
        let parsed = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut t = &mut root;
        for (i, seg) in path.iter().enumerate() {
            let table = t.as_table_mut().ok_or_else(|| SpecError::UnknownKey(key.clone()))?;
            if i + 1 == path.len() {
                table.insert(seg.clone(), parsed);
                break;
            }
            t = table.entry(seg.clone()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        *self = root.try_into().map_err(|e: toml::de::Error| SpecError::Toml(e.to_string()))?;
        Ok(())
    }

    pub fn ablation_config(&self) -> Result<AblationConfig, SpecError> {
        Ok(match &self.ablation {
            Some(a) => a.parse()?,
            None => AblationConfig::from_flags(
                self.node.mechanisms.som,
                self.node.mechanisms.lwt,
                self.node.mechanisms.ust,
                self.node.mechanisms.eds,
            )?,
        })
    }

    pub fn load_graph(&self) -> Result<Graph, SpecError> {
        match (&self.graph, &self.generator) {
            (Some(_), Some(_)) => Err(SpecError::Invalid("give either a graph file or a generator, not both".into())),
            (Some(p), None) => Ok(load_graph(p, Format::from_path(p))?),
            (None, Some(g)) => generate(g, self.seed),
            (None, None) => Err(SpecError::Invalid("no graph: set `graph` or a [generator] table".into())),
        }
    }

    /// Checks every reference (kernel, graph, program, boot labels, node shape) and
    /// loads what the run needs.
    pub fn resolve(&self) -> Result<Resolved, SpecError> {
        let ablation = self.ablation_config()?;
        let node = apply_ablation(ablation, &self.node);
        node.check().map_err(KernelError::from)?;
        let job = match (&self.kernel, &self.program) {
            (Some(_), Some(_)) => return Err(SpecError::Invalid("give either a kernel or a program, not both".into())),
            (None, None) => return Err(SpecError::Invalid("nothing to run: set `kernel` or `program`".into())),
            (Some(k), None) => {
                let kernel: Kernel = k.parse()?;
                let graph = self.load_graph()?;
                if kernel == Kernel::Bfs && self.params.source >= graph.n() {
                    return Err(SpecError::Invalid(format!("BFS source {} is not a vertex", self.params.source)));
                }
                Job::Kernel { kernel, graph, params: self.params.clone() }
            }
            (None, Some(p)) => {
                let text = fs::read_to_string(p).map_err(|source| SpecError::Io { path: p.clone(), source })?;
                let program = assemble(&text)?;
                let lanes = node.total_lanes() as u32;
                let mut boot = Vec::new();
                for b in &self.boot {
                    let label = program
                        .label_id(&b.label)
                        .ok_or_else(|| SpecError::Invalid(format!("boot label {:?} is not in the program", b.label)))?;
                    if b.lane >= lanes {
                        return Err(SpecError::Invalid(format!("boot lane {} outside the node's {lanes} lanes", b.lane)));
                    }
                    if b.operands.len() > 8 {
                        return Err(SpecError::Invalid("boot events carry at most 8 operands".into()));
                    }
                    let cont = b.continuation.unwrap_or(EventWord::NULL.0);
                    boot.push(Event::new(EventWord::new_thread(b.lane, label), &b.operands, cont, Source::Host));
                }
                if boot.is_empty() {
                    return Err(SpecError::Invalid("a program run needs at least one [[boot]] entry".into()));
                }
                Job::Program { program, boot }
            }
        };
        Ok(Resolved { node, ablation, job, output: self.output.clone() })
    }
}

/// Leaves that are absent from the serialized form when unset.
fn known_optional(scope: &[&str], key: &str) -> bool {
    match scope {
        [] => ["kernel", "graph", "ablation", "output", "program"].contains(&key),
        _ => false,
    }
}

pub fn generate(g: &GeneratorSpec, seed: u64) -> Result<Graph, SpecError> {
    Ok(match g.kind.as_str() {
        "random" => Graph::random(g.n, g.m, seed),
        "power_law" => Graph::power_law(g.n, g.m, g.gamma, seed),
        "complete" => Graph::complete(g.n),
        "path" => Graph::path(g.n),
        "ring" => Graph::ring(g.n),
        "star" => Graph::star(g.n),
        k => return Err(SpecError::Invalid(format!("unknown generator {k:?}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
kernel = "tc"
seed = 7
ablation = "full"

[generator]
kind = "random"
n = 50
m = 200

[node]
accelerators = 1
lanes_per_accelerator = 4

[node.memory]
latency_cycles = 150
"#;

    #[test]
    fn parse_resolve_and_override() {
        let mut s = RunSpec::from_toml(SPEC).unwrap();
        assert_eq!(s.node.memory.latency_cycles, 150);
        assert_eq!(s.node.clock_hz, 2e9);
        s.set("accelerators", "2").unwrap();
        s.set("latency-cycles", "300").unwrap();
        s.set("iters", "4").unwrap();
        s.set("kernel", "bfs").unwrap();
        s.set("node.mechanisms.eds_dispatch_cycles", "60").unwrap();
        let mut fresh = RunSpec::default();
        fresh.set("n", "12").unwrap();
        assert_eq!(fresh.generator.as_ref().map(|g| (g.kind.as_str(), g.n)), Some(("random", 12)));
        assert_eq!((s.node.accelerators, s.node.memory.latency_cycles, s.params.iters), (2, 300, 4));
        assert_eq!(s.node.mechanisms.eds_dispatch_cycles, 60);
        assert!(matches!(s.set("no_such_field", "1"), Err(SpecError::UnknownKey(_))));
        let r = s.resolve().unwrap();
        assert!(matches!(r.job, Job::Kernel { kernel: Kernel::Bfs, .. }));
        assert_eq!(RunSpec::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn bad_references_fail_before_running() {
        assert!(RunSpec::from_toml("kernel = \"tc\"\nbogus = 1\n").is_err());
        let s = RunSpec::from_toml("kernel = \"nope\"\n[generator]\nkind = \"ring\"\nn = 4\n").unwrap();
        assert!(s.resolve().is_err());
        let s = RunSpec::from_toml("kernel = \"tc\"\ngraph = \"/does/not/exist.txt\"\n").unwrap();
        assert!(s.resolve().is_err());
        let s = RunSpec::from_toml("kernel = \"tc\"\nablation = \"half\"\n[generator]\nkind = \"ring\"\nn = 4\n").unwrap();
        assert!(matches!(s.resolve(), Err(SpecError::Ablation(_))));
    }

    #[test]
    fn program_with_boot() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("p.s"), ".event main\nmain:\n  yieldt\n").unwrap();
        let text = "program = \"p.s\"\n[[boot]]\nlane = 1\nlabel = \"main\"\noperands = [3, 4]\n[node]\naccelerators = 1\nlanes_per_accelerator = 2\n";
        fs::write(dir.path().join("run.toml"), text).unwrap();
        let s = RunSpec::load(&dir.path().join("run.toml")).unwrap();
        match s.resolve().unwrap().job {
            Job::Program { boot, .. } => assert_eq!(boot.len(), 1),
            j => panic!("{j:?}"),
        }
        let mut bad = s.clone();
        bad.boot[0].label = "missing".into();
        assert!(bad.resolve().is_err());
    }
}
