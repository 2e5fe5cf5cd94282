//! Microbenchmarks: streaming DRAM reads and thread spawning.

use serde::Serialize;

use crate::fabric::{host_event, ConfigError, NodeConfig, SimResult, Simulation};
use crate::isa::{assemble, ProgramImage};
use crate::memory::DramImage;

/// Issue loop of three instructions, response handler of three.
const STREAM_SRC: &str = "\
.event stream_main, stream_resp
# OB0 = base address, OB1 = requests for this thread
stream_main:
  ev X3, NWID, TID, @stream_resp
  add X1, OB0, ZERO
  slli X4, OB1, 6
  add X4, X4, X1
  add X9, OB1, ZERO
Lloop:
  sendm X3, X1, {WORDS}, R, X0
  addi X1, X1, 64
  bgt X4, X1, Lloop
  yield
stream_resp:
  subi X9, X9, 1
  bgt X9, ZERO, Lmore
  yieldt
Lmore:
  yield
";

const SPAWN_SRC: &str = "\
.event spawn_main, child
# OB0 = target lane, OB1 = spawn until this cycle
spawn_main:
Lloop:
  evi X1, OB0, NEW, @child
  send X1, X0, 0
  bgt OB1, CYCLE, Lloop
  yieldt
child:
  yieldt
";

pub fn stream_program(words: usize) -> ProgramImage {
    assemble(&STREAM_SRC.replace("{WORDS}", &words.to_string())).expect("streaming kernel assembles")
}

pub fn spawn_program() -> ProgramImage {
    assemble(SPAWN_SRC).expect("spawn kernel assembles")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RampPoint {
    pub transfer_words: usize,
    pub threads: usize,
    pub lanes: usize,
    pub accelerators: usize,
    /// Requests each thread issues, from its own buffer.
    pub requests_per_thread: usize,
}

impl RampPoint {
    pub fn new(transfer_words: usize, threads: usize, lanes: usize, accelerators: usize) -> Self {
        Self { transfer_words, threads, lanes, accelerators, requests_per_thread: 1024 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RampRow {
    pub point: RampPoint,
    pub cycles: u64,
    /// Traffic over the whole run.
    pub bandwidth_gbps: f64,
    /// Traffic over the middle 80% of the run.
    pub steady_gbps: f64,
    pub mean_outstanding: f64,
    pub mean_latency: f64,
}

/// Runs the streaming-read kernel at one parameter point. `node` supplies timing; its
/// shape is replaced by the point's accelerators and lanes.
pub fn stream(node: &NodeConfig, p: RampPoint) -> Result<SimResult, ConfigError> {
    let mut cfg = node.clone();
    cfg.accelerators = p.accelerators;
    cfg.lanes_per_accelerator = cfg.lanes_per_accelerator.max(p.lanes);
    if p.threads == 0 || p.lanes == 0 || p.requests_per_thread == 0 {
        return Err(ConfigError::Invalid("ramp point needs threads, lanes and requests >= 1".into()));
    }
    let img = stream_program(p.transfer_words);
    let per_thread = p.requests_per_thread;
    // One line of skew per stream so concurrent streams start on different channels.
    let stream_bytes = (per_thread as u64 + 1) * 64;
    let streams = (p.accelerators * p.lanes * p.threads) as u64;
    let mut sim = Simulation::new(cfg.clone(), &img, DramImage::new((streams * stream_bytes).max(64)))?;
    let mut k = 0u64;
    for a in 0..p.accelerators {
        for l in 0..p.lanes {
            let lane = (a * cfg.lanes_per_accelerator + l) as u32;
            for _ in 0..p.threads {
                let base = k * stream_bytes;
                sim.boot(host_event(&img, lane, "stream_main", &[base, per_thread as u64]).unwrap());
                k += 1;
            }
        }
    }
    Ok(sim.run())
}

pub fn ramp(node: &NodeConfig, points: &[RampPoint]) -> Result<Vec<RampRow>, ConfigError> {
    points
        .iter()
        .map(|&p| {
            let r = stream(node, p)?;
            let s = &r.stats;
            Ok(RampRow {
                point: p,
                cycles: r.final_cycle,
                bandwidth_gbps: s.bandwidth_gbps(),
                steady_gbps: s.windowed_bandwidth_gbps(0.1, 0.9),
                mean_outstanding: s.mean_outstanding(),
                mean_latency: s.mean_latency_cycles(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OutstandingReport {
    pub mean: f64,
    pub sampled_mean: f64,
    pub max: u64,
    pub per_lane_mean: Vec<f64>,
    pub samples: Vec<u64>,
    pub bandwidth_gbps: f64,
    /// Bandwidth predicted from mean outstanding, mean request size and mean latency.
    pub littles_law_gbps: f64,
}

pub fn outstanding(r: &SimResult) -> OutstandingReport {
    let s = &r.stats;
    OutstandingReport {
        mean: s.mean_outstanding(),
        sampled_mean: s.sampled_mean_outstanding(),
        max: s.max_outstanding,
        per_lane_mean: (0..s.lane_latency_sum.len()).map(|l| s.lane_mean_outstanding(l)).collect(),
        samples: s.outstanding_samples.clone(),
        bandwidth_gbps: s.bandwidth_gbps(),
        littles_law_gbps: s.littles_law_bandwidth_gbps(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpawnReport {
    pub threads: u64,
    pub cycles_per_thread: f64,
    pub threads_per_second: f64,
}

/// Lane 0 spawns threads on lane 1 for `cycles` cycles; the rate is measured at the receiver.
pub fn spawn(node: &NodeConfig, cycles: u64) -> Result<SpawnReport, ConfigError> {
    let mut cfg = node.clone();
    cfg.accelerators = 1;
    cfg.lanes_per_accelerator = cfg.lanes_per_accelerator.max(2);
    let img = spawn_program();
    let mut sim = Simulation::new(cfg.clone(), &img, DramImage::new(64))?;
    sim.boot(host_event(&img, 0, "spawn_main", &[1, cycles]).unwrap());
    let r = sim.run();
    let lane = &sim.lanes()[1].stats;
    let n = lane.threads_created;
    let span = match (lane.first_thread_cycle, lane.last_thread_cycle) {
        (Some(a), Some(b)) if n > 1 => (b - a) as f64 / (n - 1) as f64,
        _ => f64::NAN,
    };
    debug_assert_eq!(r.stats.threads_created, n + 1);
    Ok(SpawnReport { threads: n, cycles_per_thread: span, threads_per_second: cfg.clock_hz / span })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lane_stream_rate() {
        let node = NodeConfig::with_shape(1, 1);
        let r = stream(&node, RampPoint::new(8, 1, 1, 1)).unwrap();
        let bw = r.stats.bandwidth_gbps();
        assert!((bw - 21.3).abs() < 2.13, "{bw}");
    }

    #[test]
    fn spawn_rate_is_three_cycles() {
        let s = spawn(&NodeConfig::with_shape(1, 2), 3000).unwrap();
        assert!((s.cycles_per_thread - 3.0).abs() < 1e-9, "{}", s.cycles_per_thread);
    }

    #[test]
    fn one_word_transfers_eighth_bandwidth() {
        let node = NodeConfig::with_shape(1, 1);
        let b8 = stream(&node, RampPoint::new(8, 1, 1, 1)).unwrap().stats.bandwidth_gbps();
        let b1 = stream(&node, RampPoint::new(1, 1, 1, 1)).unwrap().stats.bandwidth_gbps();
        assert!((b8 / b1 - 8.0).abs() < 0.1, "{b8} {b1}");
    }
}
