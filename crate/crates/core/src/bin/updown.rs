use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use updown::fabric::{Halt, Simulation};
use updown::harness::bench::{self, RampPoint};
use updown::harness::report;
use updown::harness::spec::{Job, Resolved, RunSpec, SpecError};
use updown::harness::{run_ablation_suite, SuiteError};
use updown::isa::{assemble, disassemble, validate};
use updown::kernels::{build, oracle, oracle_tc_merge, KernelError};

const FAULT: u8 = 1;
const CONFIG: u8 = 2;
const MISMATCH: u8 = 3;

/// Simulator for an event-driven graph accelerator node.
///
/// Commands that take a run spec also accept trailing `--<field> <value>` overrides,
/// where the field is any key of the spec (`--accelerators 4`, `--latency-cycles 150`,
/// `--node.mechanisms.eds_dispatch_cycles 80`).
#[derive(Parser)]
#[command(name = "updown", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble and validate a source file.
    Asm {
        file: PathBuf,
        /// Print the disassembly.
        #[arg(long)]
        disasm: bool,
    },
    /// Run one kernel or program.
    Run {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Compare a kernel result with the host oracle.
        #[arg(long)]
        check: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Microbenchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCmd,
    },
    /// Run a kernel at all five ablation points.
    Ablate {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Graph inspection.
    Graph {
        #[command(subcommand)]
        which: GraphCmd,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Streaming-read bandwidth over a grid of points.
    Ramp {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        words: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        lanes: Vec<usize>,
        #[arg(long = "accels", value_delimiter = ',', default_value = "1")]
        accels: Vec<usize>,
        #[arg(long, default_value_t = 1024)]
        requests: usize,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Outstanding requests on the streaming benchmark.
    Outstanding {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long = "stream-lanes", default_value_t = 1)]
        stream_lanes: usize,
        #[arg(long, default_value_t = 4096)]
        requests: usize,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Thread creation rate of one lane.
    Spawn {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long = "for-cycles", default_value_t = 30_000)]
        for_cycles: u64,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Size and degree statistics of the spec's graph.
    Info {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl ToString) -> Self {
        Failure { code: CONFIG, message: e.to_string() }
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        Failure::config(e)
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        Failure::config(e)
    }
}

impl From<SuiteError> for Failure {
    fn from(e: SuiteError) -> Self {
        let code = match e {
            SuiteError::Kernel(_) => CONFIG,
            SuiteError::Fault { .. } => FAULT,
            SuiteError::Diverged { .. } => MISMATCH,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Asm { file, disasm } => asm(&file, disasm),
        Cmd::Run { config, check, mut overrides } => {
            let late = overrides.iter().any(|a| a == "--check");
            overrides.retain(|a| a != "--check");
            run(spec(config.as_deref(), &overrides)?, check || late)
        }
        Cmd::Ablate { config, overrides } => ablate(spec(config.as_deref(), &overrides)?),
        Cmd::Bench { which } => match which {
            BenchCmd::Ramp { config, words, threads, lanes, accels, requests, overrides } => {
                let s = spec(config.as_deref(), &overrides)?;
                let mut points = Vec::new();
                for &a in &accels {
                    for &l in &lanes {
                        for &t in &threads {
                            for &w in &words {
                                points.push(RampPoint { requests_per_thread: requests, ..RampPoint::new(w, t, l, a) });
                            }
                        }
                    }
                }
                let rows = bench::ramp(&s.node, &points).map_err(Failure::config)?;
                print!("{}", report::ramp_csv(&rows));
                if let Some(dir) = &s.output {
                    report::emit_ramp_report(dir, &rows).map_err(Failure::config)?;
                }
                Ok(())
            }
            BenchCmd::Outstanding { config, stream_lanes, requests, overrides } => {
                let s = spec(config.as_deref(), &overrides)?;
                let p = RampPoint { requests_per_thread: requests, ..RampPoint::new(8, 1, stream_lanes, 1) };
                let r = bench::stream(&s.node, p).map_err(Failure::config)?;
                let o = bench::outstanding(&r);
                println!("mean_outstanding={:.3}", o.mean);
                println!("sampled_mean_outstanding={:.3}", o.sampled_mean);
                println!("max_outstanding={}", o.max);
                println!("bandwidth_gbps={:.3}", o.bandwidth_gbps);
                println!("littles_law_gbps={:.3}", o.littles_law_gbps);
                if let Some(dir) = &s.output {
                    fs::create_dir_all(dir).map_err(Failure::config)?;
                    fs::write(dir.join("outstanding.csv"), report::outstanding_csv(&r.stats)).map_err(Failure::config)?;
                }
                Ok(())
            }
            BenchCmd::Spawn { config, for_cycles, overrides } => {
                let s = spec(config.as_deref(), &overrides)?;
                let r = bench::spawn(&s.node, for_cycles).map_err(Failure::config)?;
                println!("threads={}", r.threads);
                println!("cycles_per_thread={:.3}", r.cycles_per_thread);
                println!("threads_per_second={:.0}", r.threads_per_second);
                Ok(())
            }
        },
        Cmd::Graph { which: GraphCmd::Info { config, overrides } } => {
            let g = spec(config.as_deref(), &overrides)?.load_graph()?;
            let deg = g.degrees();
            println!("vertices={}", g.n());
            println!("edges={}", g.m());
            println!("max_degree={}", g.max_degree());
            println!("mean_degree={:.3}", if g.n() == 0 { 0.0 } else { deg.iter().sum::<usize>() as f64 / g.n() as f64 });
            println!("isolated={}", deg.iter().filter(|&&d| d == 0).count());
            println!("triangles={}", oracle_tc_merge(&g));
            Ok(())
        }
    }
}

/// Loads the spec (or the defaults) and applies `--field value` overrides.
fn spec(config: Option<&Path>, overrides: &[String]) -> Result<RunSpec, Failure> {
    let mut s = match config {
        Some(p) => RunSpec::load(p)?,
        None => RunSpec::default(),
    };
    let mut it = overrides.iter();
    while let Some(arg) = it.next() {
        let flag = arg.strip_prefix("--").ok_or_else(|| Failure::config(format!("unexpected argument {arg:?}")))?;
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Failure::config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        s.set(&key, &value)?;
    }
    Ok(s)
}

fn asm(file: &Path, disasm: bool) -> Result<(), Failure> {
    let text = fs::read_to_string(file).map_err(|e| Failure::config(format!("{}: {e}", file.display())))?;
    let img = assemble(&text).map_err(Failure::config)?;
    let diags = validate(&img);
    for d in &diags {
        eprintln!("{}: {}", d.handler, d.message);
    }
    if !diags.is_empty() {
        return Err(Failure::config(format!("{} validation error(s)", diags.len())));
    }
    if disasm {
        print!("{}", disassemble(&img));
    } else {
        println!("handlers={} instructions={}", img.handlers.len(), img.code.len());
    }
    Ok(())
}

fn run(s: RunSpec, check: bool) -> Result<(), Failure> {
    let Resolved { node, ablation, job, output } = s.resolve()?;
    match job {
        Job::Kernel { kernel, graph, params } => {
            let run = build(kernel, &graph, &params, &node)?.simulate(&node)?;
            println!("ablation={ablation}");
            print!("{}", report::summary(kernel, &run.output, &run.result.stats));
            if let Some(dir) = &output {
                report::emit_run_report(dir, kernel, &run.output, &run.result.stats).map_err(Failure::config)?;
            }
            if run.result.halted != Halt::Quiescent {
                return Err(halt_failure(&run.result));
            }
            if check {
                run.output
                    .check(&oracle(kernel, &graph, &params))
                    .map_err(|m| Failure { code: MISMATCH, message: format!("oracle mismatch: {m}") })?;
                println!("check=ok");
            }
            Ok(())
        }
        Job::Program { program, boot } => {
            if check {
                return Err(Failure::config("--check needs a kernel"));
            }
            let dram = updown::memory::DramImage::new(1 << 20);
            let mut sim = Simulation::new(node, &program, dram).map_err(Failure::config)?;
            for e in boot {
                sim.boot(e);
            }
            let r = sim.run();
            print!("{}", report::stats_summary(&r.stats));
            if let Some(dir) = &output {
                fs::create_dir_all(dir).map_err(Failure::config)?;
                fs::write(dir.join("lanes.csv"), report::lanes_csv(&r.stats)).map_err(Failure::config)?;
                fs::write(dir.join("labels.csv"), report::labels_csv(&r.stats)).map_err(Failure::config)?;
            }
            if r.halted != Halt::Quiescent {
                return Err(halt_failure(&r));
            }
            Ok(())
        }
    }
}

fn halt_failure(r: &updown::fabric::SimResult) -> Failure {
    let message = match &r.fault {
        Some(f) => f.to_string(),
        None => format!("stopped at cycle {} without quiescing ({:?})", r.final_cycle, r.halted),
    };
    Failure { code: FAULT, message }
}

fn ablate(s: RunSpec) -> Result<(), Failure> {
    let Resolved { node, job, output, .. } = s.resolve()?;
    let Job::Kernel { kernel, graph, params } = job else {
        return Err(Failure::config("ablate needs a kernel"));
    };
    let t = run_ablation_suite(kernel, &graph, &params, &node)?;
    print!("{}", report::ablation_csv(&t));
    if let Some(dir) = &output {
        report::emit_ablation_report(dir, &t).map_err(Failure::config)?;
    }
    Ok(())
}
