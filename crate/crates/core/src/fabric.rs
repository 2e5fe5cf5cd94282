//! The node: lanes grouped into accelerators, the NoC, the DRAM model and a host injector.
//!
//! Time is a single cycle counter. Within a cycle, lanes step in ascending id order, then
//! in-flight events due this cycle are delivered, then memory responses completing this
//! cycle are delivered to their continuation lanes. Stretches where every lane is waiting
//! on an external arrival are skipped in one step.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{MemKind, ProgramImage};
use crate::lane::{
    Event, EventWord, Fault, FaultKind, Lane, LaneConfig, Microcode, Origin, Outbound, Source, CONTEXTS_PER_LANE,
};
use crate::memory::{DramImage, MemError, MemTiming, Memory};
use crate::stats::SimStats;

/// Which architectural mechanisms are enabled. All on is the full design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mechanisms {
    /// Split-transaction memory: `sendm` does not block the lane.
    pub som: bool,
    /// Lightweight threads: 128 contexts per lane instead of 1.
    pub lwt: bool,
    /// Ultra-short threads: operands land directly in registers.
    pub ust: bool,
    /// Event-driven scheduling: single-cycle hardware dispatch.
    pub eds: bool,
    /// Dispatch cost per operand word when `ust` is off.
    pub ust_cycles_per_operand: u64,
    /// Dispatch cost when `eds` is off.
    pub eds_dispatch_cycles: u64,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Self { som: true, lwt: true, ust: true, eds: true, ust_cycles_per_operand: 2, eds_dispatch_cycles: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub accelerators: usize,
    pub lanes_per_accelerator: usize,
    pub clock_hz: f64,
    pub noc_latency_intra: u64,
    pub noc_latency_inter: u64,
    pub memory: MemTiming,
    pub mechanisms: Mechanisms,
    pub queue_high_water: usize,
    pub max_cycles: u64,
    pub sample_interval: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            accelerators: 32,
            lanes_per_accelerator: 64,
            clock_hz: 2e9,
            noc_latency_intra: 10,
            noc_latency_inter: 30,
            memory: MemTiming::default(),
            mechanisms: Mechanisms::default(),
            queue_high_water: 1024,
            max_cycles: 2_000_000_000,
            sample_interval: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl NodeConfig {
    /// A node with `accelerators` accelerators of `lanes` lanes each, defaults otherwise.
    pub fn with_shape(accelerators: usize, lanes: usize) -> Self {
        Self { accelerators, lanes_per_accelerator: lanes, ..Self::default() }
    }

    pub fn total_lanes(&self) -> usize {
        self.accelerators * self.lanes_per_accelerator
    }

    pub fn accelerator_of(&self, lane: u32) -> usize {
        lane as usize / self.lanes_per_accelerator
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("accelerators", self.accelerators),
            ("lanes_per_accelerator", self.lanes_per_accelerator),
            ("memory.stacks", self.memory.stacks),
            ("memory.channels_per_stack", self.memory.channels_per_stack),
            ("sample_interval", self.sample_interval as usize),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if !(self.clock_hz > 0.0) {
            return Err(ConfigError::Invalid("clock_hz must be positive".into()));
        }
        if !(self.memory.channel_bytes_per_cycle > 0.0) {
            return Err(ConfigError::Invalid("memory.channel_bytes_per_cycle must be positive".into()));
        }
        if self.total_lanes() > u32::MAX as usize >> 8 {
            return Err(ConfigError::Invalid("too many lanes for the event word".into()));
        }
        Ok(())
    }

    pub fn lane_config(&self) -> LaneConfig {
        let m = &self.mechanisms;
        LaneConfig {
            contexts: if m.lwt { CONTEXTS_PER_LANE } else { 1 },
            blocking_memory: !m.som,
            dispatch_cycles_per_operand: if m.ust { 0 } else { m.ust_cycles_per_operand },
            dispatch_penalty: if m.eds { 0 } else { m.eds_dispatch_cycles },
            queue_high_water: self.queue_high_water,
        }
    }

    /// NoC latency from `src` to `dst`.
    pub fn latency(&self, src: u32, dst: u32) -> u64 {
        if self.accelerator_of(src) == self.accelerator_of(dst) {
            self.noc_latency_intra
        } else {
            self.noc_latency_inter
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Halt {
    Quiescent,
    MaxCycles,
    Fault,
}

impl fmt::Display for Halt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Halt::Quiescent => "QUIESCENT",
            Halt::MaxCycles => "MAX_CYCLES",
            Halt::Fault => "FAULT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimFault {
    #[error(transparent)]
    Lane(#[from] Fault),
    #[error("deadlock at cycle {cycle}: {blocked} lane(s) hold events that can never dispatch")]
    Deadlock { cycle: u64, blocked: usize },
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub halted: Halt,
    /// Number of simulated cycles.
    pub final_cycle: u64,
    pub stats: SimStats,
    pub fault: Option<SimFault>,
}

/// A region the host reads back after the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResultRegion {
    Dram { addr: u64, words: usize },
    Scratch { lane: u32, addr: u64, words: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollectError {
    #[error("simulation still running")]
    Running,
    #[error("result region out of range: {0}")]
    OutOfRange(String),
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct InFlight {
    deliver_cycle: u64,
    seq: u64,
    event: EventBox,
}

#[derive(Debug, PartialEq, Eq)]
struct EventBox(Box<Event>);

impl PartialOrd for EventBox {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventBox {
    // Ordering is fully decided by (deliver_cycle, seq), which are unique.
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ready,
    Running,
    Halted,
}

pub struct Simulation {
    cfg: NodeConfig,
    code: Arc<Microcode>,
    lanes: Vec<Lane>,
    memory: Memory,
    inflight: BinaryHeap<Reverse<InFlight>>,
    seq: u64,
    next_req_id: u64,
    cycle: u64,
    phase: Phase,
    out: Vec<Outbound>,
    stats: SimStats,
    result: Option<SimResult>,
    boot_fault: Option<SimFault>,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("cycle", &self.cycle)
            .field("lanes", &self.lanes.len())
            .field("phase", &self.phase)
            .finish()
    }
}

impl Simulation {
    pub fn new(cfg: NodeConfig, program: &ProgramImage, dram: DramImage) -> Result<Self, ConfigError> {
        cfg.check()?;
        if !crate::isa::validate(program).is_empty() {
            return Err(ConfigError::Invalid("program image fails validation".into()));
        }
        let code = Arc::new(Microcode::new(program));
        let lane_cfg = cfg.lane_config();
        let n = cfg.total_lanes();
        let lanes = (0..n).map(|i| Lane::new(i as u32, lane_cfg.clone(), code.clone())).collect();
        let memory = Memory::new(cfg.memory.clone(), dram, cfg.accelerators);
        let stats = SimStats {
            clock_hz: cfg.clock_hz,
            sample_interval: cfg.sample_interval,
            lane_latency_sum: vec![0; n],
            ..Default::default()
        };
        Ok(Self {
            cfg,
            code,
            lanes,
            memory,
            inflight: BinaryHeap::new(),
            seq: 0,
            next_req_id: 0,
            cycle: 0,
            phase: Phase::Ready,
            out: Vec::new(),
            stats,
            result: None,
            boot_fault: None,
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn dram(&self) -> &DramImage {
        self.memory.image()
    }

    pub fn into_dram(self) -> DramImage {
        self.memory.into_image()
    }

    pub fn host_write_words(&mut self, addr: u64, words: &[u64]) -> Result<(), MemError> {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        self.memory.host_write(addr, &bytes)
    }

    pub fn host_write_scratch(&mut self, lane: u32, addr: u64, value: u64) -> Result<(), CollectError> {
        if self.phase != Phase::Ready {
            return Err(CollectError::Running);
        }
        let l = self
            .lanes
            .get_mut(lane as usize)
            .ok_or_else(|| CollectError::OutOfRange(format!("lane {lane}")))?;
        l.scratch_write(addr, value).map_err(|k| CollectError::OutOfRange(k.to_string()))
    }

    /// Enqueues a host event before cycle 0. An invalid lane faults when the run starts.
    pub fn boot(&mut self, event: Event) {
        let dst = event.evword.lane();
        match self.lanes.get_mut(dst as usize) {
            Some(l) => l.enqueue(event),
            None => {
                self.boot_fault.get_or_insert(SimFault::Lane(Fault {
                    lane: dst,
                    tid: None,
                    pc: None,
                    cycle: 0,
                    kind: FaultKind::InvalidDestination { lane: dst },
                }));
            }
        }
    }

    fn push_inflight(&mut self, deliver_cycle: u64, event: Event) {
        self.inflight.push(Reverse(InFlight { deliver_cycle, seq: self.seq, event: EventBox(Box::new(event)) }));
        self.seq += 1;
    }

    /// Runs until quiescence, a fault or `max_cycles`.
    pub fn run(&mut self) -> SimResult {
        self.advance(u64::MAX).expect("unbounded advance always halts")
    }

    /// Runs at most `cycles` more cycles. Returns the result once the simulation has halted.
    pub fn advance(&mut self, cycles: u64) -> Option<SimResult> {
        if let Some(r) = &self.result {
            return Some(r.clone());
        }
        if self.phase == Phase::Ready {
            self.phase = Phase::Running;
            self.memory.set_in_simulation(true);
            if let Some(f) = self.boot_fault.take() {
                return Some(self.halt(Halt::Fault, Some(f)));
            }
        }
        let stop = self.cycle.saturating_add(cycles);
        while self.cycle < stop {
            if self.cycle >= self.cfg.max_cycles {
                return Some(self.halt(Halt::MaxCycles, None));
            }
            if let Err(f) = self.step_cycle() {
                return Some(self.halt(Halt::Fault, Some(f)));
            }
            let c = self.cycle;
            if self.is_quiescent() {
                self.cycle = c + 1;
                return Some(self.halt(Halt::Quiescent, None));
            }
            let next = if self.lanes.iter().all(|l| l.is_quiet()) {
                let next = [self.inflight.peek().map(|Reverse(m)| m.deliver_cycle), self.memory.next_completion()]
                    .into_iter()
                    .flatten()
                    .min();
                match next {
                    Some(n) => n.max(c + 1),
                    None => {
                        let blocked = self.lanes.iter().filter(|l| l.queue_len() > 0).count();
                        self.cycle = c + 1;
                        return Some(self.halt(Halt::Fault, Some(SimFault::Deadlock { cycle: c, blocked })));
                    }
                }
            } else {
                c + 1
            };
            let next = next.min(self.cfg.max_cycles).min(stop.max(c + 1));
            self.sample_range(c + 1, next);
            self.cycle = next;
        }
        None
    }

    /// Records outstanding-request samples for skipped cycles in `[from, to)`.
    fn sample_range(&mut self, from: u64, to: u64) {
        let k = self.cfg.sample_interval;
        let outstanding = self.memory.outstanding() as u64;
        let mut s = from.div_ceil(k) * k;
        while s < to {
            self.stats.outstanding_samples.push(outstanding);
            s += k;
        }
    }

    fn is_quiescent(&self) -> bool {
        self.inflight.is_empty() && self.memory.outstanding() == 0 && self.lanes.iter().all(|l| l.is_idle())
    }

    fn step_cycle(&mut self) -> Result<(), SimFault> {
        let c = self.cycle;
        let mut out = std::mem::take(&mut self.out);
        for i in 0..self.lanes.len() {
            if self.lanes[i].is_quiet() {
                continue;
            }
            self.lanes[i].step(c, &mut out)?;
            for o in out.drain(..) {
                self.route(o, c)?;
            }
        }
        self.out = out;

        while let Some(Reverse(m)) = self.inflight.peek() {
            if m.deliver_cycle > c {
                break;
            }
            let Reverse(m) = self.inflight.pop().unwrap();
            let ev = *m.event.0;
            self.stats.events_delivered += 1;
            self.lanes[ev.evword.lane() as usize].enqueue(ev);
        }

        for resp in self.memory.tick(c) {
            let src = resp.src_lane as usize;
            self.stats.lane_latency_sum[src] += resp.complete_cycle - resp.issue_cycle;
            let bucket = (c / self.cfg.sample_interval) as usize;
            if self.stats.completed_bytes.len() <= bucket {
                self.stats.completed_bytes.resize(bucket + 1, 0);
            }
            self.stats.completed_bytes[bucket] += resp.bytes;
            if self.lanes[src].is_waiting_on_memory() {
                self.lanes[src].memory_response_arrived();
            }
            let w = EventWord(resp.continuation);
            if w.is_null() {
                self.stats.dropped_responses += 1;
                continue;
            }
            if !w.is_well_formed() || w.lane() as usize >= self.lanes.len() {
                let kind = if w.is_well_formed() {
                    FaultKind::InvalidDestination { lane: w.lane() }
                } else {
                    FaultKind::MalformedEventWord { word: w.0 }
                };
                return Err(Fault { lane: resp.src_lane, tid: None, pc: None, cycle: c, kind }.into());
            }
            let ops: &[u64] = match resp.kind {
                MemKind::Read => &resp.payload,
                MemKind::Write => &[],
            };
            let ev = Event::new(w, ops, resp.addr, Source::Memory { req_id: resp.req_id });
            self.lanes[w.lane() as usize].enqueue(ev);
        }

        let outstanding = self.memory.outstanding() as u64;
        self.stats.max_outstanding = self.stats.max_outstanding.max(outstanding);
        if c % self.cfg.sample_interval == 0 {
            self.stats.outstanding_samples.push(outstanding);
        }
        Ok(())
    }

    fn route(&mut self, o: Outbound, c: u64) -> Result<(), SimFault> {
        let fault = |origin: Origin, kind| Fault { lane: origin.lane, tid: Some(origin.tid), pc: Some(origin.pc), cycle: c, kind };
        match o {
            Outbound::Event { event, origin } => {
                let dst = event.evword.lane();
                if dst as usize >= self.lanes.len() {
                    return Err(fault(origin, FaultKind::InvalidDestination { lane: dst }).into());
                }
                self.stats.events_sent += 1;
                let lat = self.cfg.latency(origin.lane, dst).max(1);
                self.push_inflight(c + lat, event);
            }
            Outbound::Mem { mut req, origin } => {
                req.req_id = self.next_req_id;
                self.next_req_id += 1;
                let accel = self.cfg.accelerator_of(origin.lane);
                self.memory.submit(req, c, accel).map_err(|e| fault(origin, FaultKind::Memory(e)))?;
            }
        }
        Ok(())
    }

    fn halt(&mut self, halted: Halt, fault: Option<SimFault>) -> SimResult {
        self.phase = Phase::Halted;
        self.memory.set_in_simulation(false);
        let total = self.cycle;
        let s = &mut self.stats;
        s.total_cycles = total;
        s.completed_bytes.resize(total.div_ceil(self.cfg.sample_interval) as usize, 0);
        s.dram_read_bytes = self.memory.read_bytes;
        s.dram_write_bytes = self.memory.write_bytes;
        s.dram_requests = self.memory.requests;
        s.dram_latency_sum = self.memory.latency_sum;
        s.lane_busy_cycles = self.lanes.iter().map(|l| l.stats.busy_cycles).collect();
        s.first_thread_cycle = self.lanes.iter().map(|l| l.stats.first_thread_cycle).collect();
        s.last_thread_cycle = self.lanes.iter().map(|l| l.stats.last_thread_cycle).collect();
        let mut labels = vec![0u64; self.code.num_labels()];
        s.instr_histogram.clear();
        s.memref_histogram.clear();
        s.threads_created = 0;
        s.threads_terminated = 0;
        s.invocations = 0;
        s.instructions = 0;
        s.high_water_events = 0;
        s.max_queue_depth = 0;
        s.dispatch_penalty_cycles = 0;
        for l in &self.lanes {
            let ls = &l.stats;
            s.threads_created += ls.threads_created;
            s.threads_terminated += ls.threads_terminated;
            s.invocations += ls.invocations;
            s.instructions += ls.instructions;
            s.high_water_events += ls.high_water_events;
            s.max_queue_depth = s.max_queue_depth.max(ls.max_queue_depth);
            s.dispatch_penalty_cycles += ls.dispatch_penalty_cycles;
            for (k, v) in &ls.invocation_instrs {
                *s.instr_histogram.entry(*k).or_default() += v;
            }
            for (k, v) in &ls.invocation_mem_refs {
                *s.memref_histogram.entry(*k).or_default() += v;
            }
            for (i, v) in ls.label_invocations.iter().enumerate() {
                labels[i] += v;
            }
        }
        s.label_invocations = labels
            .iter()
            .enumerate()
            .map(|(i, v)| (self.code.label_name(i as u16).to_string(), *v))
            .collect::<BTreeMap<_, _>>();
        let r = SimResult { halted, final_cycle: total, stats: s.clone(), fault };
        self.result = Some(r.clone());
        r
    }

    /// Reads result regions back. Only allowed once the simulation has halted.
    pub fn host_collect(&self, regions: &[ResultRegion]) -> Result<Vec<u64>, CollectError> {
        if self.phase != Phase::Halted {
            return Err(CollectError::Running);
        }
        let mut out = Vec::new();
        for r in regions {
            match *r {
                ResultRegion::Dram { addr, words } => {
                    let v = self
                        .memory
                        .image()
                        .read_words(addr, words)
                        .map_err(|e| CollectError::OutOfRange(e.to_string()))?;
                    out.extend(v);
                }
                ResultRegion::Scratch { lane, addr, words } => {
                    let l = self
                        .lanes
                        .get(lane as usize)
                        .ok_or_else(|| CollectError::OutOfRange(format!("lane {lane}")))?;
                    for i in 0..words as u64 {
                        out.push(l.scratch_read(addr + 8 * i).map_err(|k| CollectError::OutOfRange(k.to_string()))?);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Builds a node, queues `boot` and runs it to completion.
pub fn run(
    cfg: NodeConfig,
    program: &ProgramImage,
    dram: DramImage,
    boot: Vec<Event>,
) -> Result<(SimResult, Simulation), ConfigError> {
    let mut sim = Simulation::new(cfg, program, dram)?;
    for e in boot {
        sim.boot(e);
    }
    let r = sim.run();
    Ok((r, sim))
}

/// A host-injected event with a fresh thread.
pub fn host_event(program: &ProgramImage, lane: u32, label: &str, operands: &[u64]) -> Option<Event> {
    let id = program.label_id(label)?;
    Some(Event::new(EventWord::new_thread(lane, id), operands, EventWord::NULL.0, Source::Host))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    fn small() -> NodeConfig {
        NodeConfig::with_shape(2, 4)
    }

    #[test]
    fn trivial_boot_quiesces() {
        let img = assemble(".event main\nmain:\n  yieldt\n").unwrap();
        let boot = vec![host_event(&img, 0, "main", &[]).unwrap()];
        let (r, _) = run(small(), &img, DramImage::new(1 << 20), boot).unwrap();
        assert_eq!(r.halted, Halt::Quiescent);
        assert_eq!(r.final_cycle, 2);
        assert_eq!(r.stats.invocations, 1);
    }

    #[test]
    fn noc_latencies() {
        let src = ".event main, hit\nmain:\n  evi X1, OB0, NEW, @hit\n  send X1, X0, 0\n  yieldt\nhit:\n  movrl CYCLE, ZERO, 0\n  yieldt\n";
        let img = assemble(src).unwrap();
        for (dst, want) in [(1u64, 11u64), (4, 31), (0, 11)] {
            // main dispatches at 0, evi at 1, send at 2; hit dispatches on delivery and stores CYCLE one cycle later.
            let boot = vec![host_event(&img, 0, "main", &[dst]).unwrap()];
            let (r, sim) = run(small(), &img, DramImage::new(1 << 20), boot).unwrap();
            assert_eq!(r.halted, Halt::Quiescent);
            let v = sim.host_collect(&[ResultRegion::Scratch { lane: dst as u32, addr: 0, words: 1 }]).unwrap();
            assert_eq!(v[0], 2 + want + 1, "dst {dst}");
            assert_eq!(r.stats.events_sent, r.stats.events_delivered);
        }
    }

    #[test]
    fn invalid_boot_lane_faults() {
        let img = assemble(".event main\nmain:\n  yieldt\n").unwrap();
        let boot = vec![host_event(&img, 99999, "main", &[]).unwrap()];
        let (r, _) = run(NodeConfig::with_shape(4, 64), &img, DramImage::new(1 << 20), boot).unwrap();
        assert_eq!(r.halted, Halt::Fault);
        assert!(r.fault.unwrap().to_string().contains("invalid destination lane"));
    }

    #[test]
    fn collect_before_halt() {
        let img = assemble(".event main\nmain:\n  yieldt\n").unwrap();
        let mut sim = Simulation::new(small(), &img, DramImage::new(1 << 20)).unwrap();
        sim.boot(host_event(&img, 0, "main", &[]).unwrap());
        assert!(sim.advance(1).is_none());
        let e = sim.host_collect(&[ResultRegion::Dram { addr: 0, words: 1 }]).unwrap_err();
        assert_eq!(e.to_string(), "simulation still running");
    }

    #[test]
    fn memory_round_trip_and_fast_forward() {
        let src = ".event main, got\nmain:\n  evi X1, NWID, NEW, @got\n  movir X2, 4096\n  sendm X1, X2, 1, R, X0\n  yieldt\ngot:\n  movrl OB0, ZERO, 0\n  movrl ECONT, ZERO, 8\n  yieldt\n";
        let img = assemble(src).unwrap();
        let mut dram = DramImage::new(1 << 20);
        dram.write_words(4096, &[77]).unwrap();
        let boot = vec![host_event(&img, 0, "main", &[]).unwrap()];
        let (r, sim) = run(small(), &img, dram, boot).unwrap();
        assert_eq!(r.halted, Halt::Quiescent);
        let v = sim.host_collect(&[ResultRegion::Scratch { lane: 0, addr: 0, words: 2 }]).unwrap();
        assert_eq!(v, vec![77, 4096]);
        // sendm at cycle 3 completes at 3 + 1 + 200 = 204, got dispatches 205, yieldt at 208.
        assert_eq!(r.final_cycle, 209);
        assert_eq!(r.stats.dram_requests, 1);
    }

    #[test]
    fn deterministic_stats() {
        let src = ".event main, hit\nmain:\n  evi X1, OB0, NEW, @hit\n  send X1, X0, 0\n  send X1, X0, 0\n  yieldt\nhit:\n  yieldt\n";
        let img = assemble(src).unwrap();
        let go = || {
            let boot = (0..8u32).map(|l| host_event(&img, l, "main", &[(7 - l) as u64]).unwrap()).collect();
            run(small(), &img, DramImage::new(1 << 20), boot).unwrap().0.stats
        };
        assert_eq!(go(), go());
    }
}
