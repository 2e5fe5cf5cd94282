//! One UpDown lane: FIFO event queue, 128 lightweight thread contexts, single-cycle
//! event dispatch, in-order single-issue execution and a 64KB scratchpad.
//!
//! A lane advances exactly one cycle per [`Lane::step`]. While a thread is active it
//! executes one instruction per cycle; when it yields, the next queued event is
//! dispatched in the same cycle. An idle lane that receives an event spends one cycle
//! dispatching it before the handler's first instruction runs.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::isa::{MemKind, Opcode, Operand, ProgramImage, Reg, Special, MAX_OPERANDS, NUM_GPRS};
use crate::memory::{MemError, MemRequest};

pub const CONTEXTS_PER_LANE: usize = 128;
pub const SCRATCHPAD_BYTES: u64 = 64 * 1024;
const SCRATCH_WORDS: usize = (SCRATCHPAD_BYTES / 8) as usize;

/// Thread binding that asks dispatch to allocate a fresh context.
pub const NEW_THREAD: u8 = 0xFF;
/// `ESRC` value for events produced by the memory controller.
pub const SRC_MEMORY: u64 = 0xFFFF_FFFF;
/// `ESRC` value for events injected by the host.
pub const SRC_HOST: u64 = 0xFFFF_FFFE;

/// Destination lane, thread binding and handler label packed in one 64-bit word.
///
/// Bits 0..16 hold the label, 16..24 the thread id (`0xFF` = NEW), 24..56 the lane.
/// All-ones is the NULL word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventWord(pub u64);

impl EventWord {
    pub const NULL: EventWord = EventWord(u64::MAX);

    pub fn new(lane: u32, thread: u8, label: u16) -> Self {
        EventWord((lane as u64) << 24 | (thread as u64) << 16 | label as u64)
    }

    pub fn new_thread(lane: u32, label: u16) -> Self {
        Self::new(lane, NEW_THREAD, label)
    }

    pub fn is_null(self) -> bool {
        self == Self::NULL
    }

    pub fn lane(self) -> u32 {
        (self.0 >> 24) as u32
    }

    pub fn thread(self) -> u8 {
        (self.0 >> 16) as u8
    }

    pub fn label(self) -> u16 {
        self.0 as u16
    }

    pub fn is_new(self) -> bool {
        self.thread() == NEW_THREAD
    }

    /// Bits 56..64 must be clear in a well-formed non-NULL word.
    pub fn is_well_formed(self) -> bool {
        self.0 >> 56 == 0
    }
}

impl fmt::Debug for EventWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            return f.write_str("EventWord(NULL)");
        }
        let t = if self.is_new() { "NEW".to_string() } else { self.thread().to_string() };
        write!(f, "EventWord(lane={}, tid={}, label={})", self.lane(), t, self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Lane(u32),
    Memory { req_id: u64 },
    Host,
}

impl Source {
    fn esrc(self) -> u64 {
        match self {
            Source::Lane(l) => l as u64,
            Source::Memory { .. } => SRC_MEMORY,
            Source::Host => SRC_HOST,
        }
    }
}

/// An immutable message: handler label, thread binding, up to 8 operand words and a continuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub evword: EventWord,
    operands: [u64; MAX_OPERANDS],
    nops: u8,
    pub continuation: u64,
    pub src: Source,
}

impl Event {
    /// Panics if more than 8 operands are given.
    pub fn new(evword: EventWord, operands: &[u64], continuation: u64, src: Source) -> Self {
        assert!(operands.len() <= MAX_OPERANDS, "events carry at most 8 operands");
        let mut ops = [0u64; MAX_OPERANDS];
        ops[..operands.len()].copy_from_slice(operands);
        Self { evword, operands: ops, nops: operands.len() as u8, continuation, src }
    }

    pub fn operands(&self) -> &[u64] {
        &self.operands[..self.nops as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadState {
    Free,
    Suspended,
    Active,
}

#[derive(Debug, Clone)]
pub struct ThreadContext {
    pub tid: u8,
    pub gprs: [u64; NUM_GPRS],
    pub state: ThreadState,
    pub spawn_cycle: u64,
}

/// Per-lane execution parameters, after any ablation has been applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneConfig {
    pub contexts: usize,
    /// `sendm`-class instructions stall the lane until their response returns.
    pub blocking_memory: bool,
    /// Extra cycles per operand word charged at dispatch.
    pub dispatch_cycles_per_operand: u64,
    /// Fixed extra cycles charged at every dispatch.
    pub dispatch_penalty: u64,
    pub queue_high_water: usize,
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self {
            contexts: CONTEXTS_PER_LANE,
            blocking_memory: false,
            dispatch_cycles_per_operand: 0,
            dispatch_penalty: 0,
            queue_high_water: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultKind {
    DanglingThread { tid: u8 },
    UnknownLabel { label: u16 },
    ScratchOutOfBounds { addr: u64 },
    ScratchMisaligned { addr: u64 },
    OperandCount { n: u64 },
    MalformedEventWord { word: u64 },
    InvalidDestination { lane: u32 },
    Memory(MemError),
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::DanglingThread { tid } => write!(f, "dangling thread binding (tid {tid} is free)"),
            FaultKind::UnknownLabel { label } => write!(f, "unknown event label {label}"),
            FaultKind::ScratchOutOfBounds { addr } => write!(f, "scratchpad access out of bounds at {addr:#x}"),
            FaultKind::ScratchMisaligned { addr } => write!(f, "misaligned scratchpad word access at {addr:#x}"),
            FaultKind::OperandCount { n } => write!(f, "operand count {n} outside the allowed range"),
            FaultKind::MalformedEventWord { word } => write!(f, "malformed event word {word:#x}"),
            FaultKind::InvalidDestination { lane } => write!(f, "invalid destination lane {lane}"),
            FaultKind::Memory(e) => write!(f, "memory request rejected: {e}"),
        }
    }
}

/// A simulation fault with the lane, thread, pc and cycle where it was raised.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fault at cycle {cycle} on lane {lane} (tid {tid:?}, pc {pc:?}): {kind}")]
pub struct Fault {
    pub lane: u32,
    pub tid: Option<u8>,
    pub pc: Option<usize>,
    pub cycle: u64,
    pub kind: FaultKind,
}

/// Where an outbound message came from, for fault attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub lane: u32,
    pub tid: u8,
    pub pc: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outbound {
    Event { event: Event, origin: Origin },
    Mem { req: MemRequest, origin: Origin },
}

/// Decoded register source.
#[derive(Debug, Clone, Copy)]
enum Src {
    Gpr(u8),
    Ob(u8),
    Sr(Special),
}

#[derive(Debug, Clone, Copy)]
enum Alu {
    Add,
    Sub,
    And,
    Or,
    Sll,
    Srl,
    Fadd,
    Fmul,
    Fdiv,
}

#[derive(Debug, Clone, Copy)]
enum Cond {
    Eq,
    Le,
    Gt,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Yield,
    Yieldt,
    Ev { d: u8, lane: Src, tid: Src, label: u16 },
    Evi { d: u8, lane: Src, label: u16 },
    Evii { d: u8, lane: u32, label: u16 },
    Send { ev: Src, base: u8, n: u8 },
    Sendr { ev: Src, a: Src, b: Src },
    Sendops { ev: Src },
    Sendm { cont: Src, addr: Src, n: u8, kind: MemKind, base: u8 },
    Sendmr { cont: Src, addr: Src, a: Src, b: Src },
    Sendmops { cont: Src, addr: Src },
    Alu { f: Alu, d: u8, a: Src, b: Src },
    AluI { f: Alu, d: u8, a: Src, imm: u64 },
    Movir { d: u8, imm: u64 },
    Fcvt { d: u8, a: Src },
    Br { c: Cond, a: Src, b: Src, target: usize },
    Movlr { d: u8, addr: Src, off: i64 },
    Movrl { s: Src, addr: Src, off: i64 },
    Bcpy { dst: Src, src: Src, n: Src },
    Bcpyol { dst: Src },
    Cstr { count: u8, dst: Src, src: Src, len: Src, key: Src },
    Cswp { d: u8, addr: Src, expected: Src, new: Src },
}

/// A program image decoded for execution: branch targets made absolute.
#[derive(Debug)]
pub struct Microcode {
    ops: Vec<Op>,
    entries: Vec<usize>,
    labels: Vec<String>,
}

impl Microcode {
    pub fn new(image: &ProgramImage) -> Self {
        let mut ops = Vec::with_capacity(image.code.len());
        for h in &image.handlers {
            for ins in image.body(h) {
                ops.push(decode(ins, h.entry));
            }
        }
        Self {
            ops,
            entries: image.handlers.iter().map(|h| h.entry).collect(),
            labels: image.handlers.iter().map(|h| h.label.clone()).collect(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.entries.len()
    }

    pub fn label_name(&self, id: u16) -> &str {
        &self.labels[id as usize]
    }
}

fn decode(ins: &crate::isa::Instruction, entry: usize) -> Op {
    let src = |i: usize| match ins.reg(i) {
        Reg::Gpr(g) => Src::Gpr(g),
        Reg::Operand(o) => Src::Ob(o),
        Reg::Special(s) => Src::Sr(s),
    };
    let gpr = |i: usize| match ins.reg(i) {
        Reg::Gpr(g) => g,
        other => panic!("validated image has non-GPR destination {other}"),
    };
    let label = |i: usize| match &ins.operands[i] {
        Operand::Event { id, .. } => *id,
        other => panic!("expected event label, got {other}"),
    };
    let imm = |i: usize| ins.imm(i) as u64;
    match ins.op {
        Opcode::Yield => Op::Yield,
        Opcode::Yieldt => Op::Yieldt,
        Opcode::Ev => Op::Ev { d: gpr(0), lane: src(1), tid: src(2), label: label(3) },
        Opcode::Evi => Op::Evi { d: gpr(0), lane: src(1), label: label(3) },
        Opcode::Evii => Op::Evii { d: gpr(0), lane: imm(1) as u32, label: label(3) },
        Opcode::Send => Op::Send { ev: src(0), base: gpr(1), n: imm(2) as u8 },
        Opcode::Sendr => Op::Sendr { ev: src(0), a: src(1), b: src(2) },
        Opcode::Sendops => Op::Sendops { ev: src(0) },
        Opcode::Sendm => Op::Sendm {
            cont: src(0),
            addr: src(1),
            n: imm(2) as u8,
            kind: match ins.operands[3] {
                Operand::Mode(k) => k,
                _ => unreachable!(),
            },
            base: gpr(4),
        },
        Opcode::Sendmr => Op::Sendmr { cont: src(0), addr: src(1), a: src(2), b: src(3) },
        Opcode::Sendmops => Op::Sendmops { cont: src(0), addr: src(1) },
        Opcode::Add => Op::Alu { f: Alu::Add, d: gpr(0), a: src(1), b: src(2) },
        Opcode::Sub => Op::Alu { f: Alu::Sub, d: gpr(0), a: src(1), b: src(2) },
        Opcode::And => Op::Alu { f: Alu::And, d: gpr(0), a: src(1), b: src(2) },
        Opcode::Or => Op::Alu { f: Alu::Or, d: gpr(0), a: src(1), b: src(2) },
        Opcode::Fadd => Op::Alu { f: Alu::Fadd, d: gpr(0), a: src(1), b: src(2) },
        Opcode::Fmul => Op::Alu { f: Alu::Fmul, d: gpr(0), a: src(1), b: src(2) },
        Opcode::Fdiv => Op::Alu { f: Alu::Fdiv, d: gpr(0), a: src(1), b: src(2) },
        Opcode::Addi => Op::AluI { f: Alu::Add, d: gpr(0), a: src(1), imm: imm(2) },
        Opcode::Subi => Op::AluI { f: Alu::Sub, d: gpr(0), a: src(1), imm: imm(2) },
        Opcode::Andi => Op::AluI { f: Alu::And, d: gpr(0), a: src(1), imm: imm(2) },
        Opcode::Ori => Op::AluI { f: Alu::Or, d: gpr(0), a: src(1), imm: imm(2) },
        Opcode::Slli => Op::AluI { f: Alu::Sll, d: gpr(0), a: src(1), imm: imm(2) },
        Opcode::Srli => Op::AluI { f: Alu::Srl, d: gpr(0), a: src(1), imm: imm(2) },
        Opcode::Movir => Op::Movir { d: gpr(0), imm: imm(1) },
        Opcode::Fcvt => Op::Fcvt { d: gpr(0), a: src(1) },
        Opcode::Beq | Opcode::Ble | Opcode::Bgt => {
            let target = match &ins.operands[2] {
                Operand::Code { target, .. } => entry + target,
                _ => unreachable!(),
            };
            let c = match ins.op {
                Opcode::Beq => Cond::Eq,
                Opcode::Ble => Cond::Le,
                _ => Cond::Gt,
            };
            Op::Br { c, a: src(0), b: src(1), target }
        }
        Opcode::Movlr => Op::Movlr { d: gpr(0), addr: src(1), off: ins.imm(2) },
        Opcode::Movrl => Op::Movrl { s: src(0), addr: src(1), off: ins.imm(2) },
        Opcode::Bcpy => Op::Bcpy { dst: src(0), src: src(1), n: src(2) },
        Opcode::Bcpyol => Op::Bcpyol { dst: src(0) },
        Opcode::Cstr => Op::Cstr { count: gpr(0), dst: src(1), src: src(2), len: src(3), key: src(4) },
        Opcode::Cswp => Op::Cswp { d: gpr(0), addr: src(1), expected: src(2), new: src(3) },
    }
}

fn alu(f: Alu, a: u64, b: u64) -> u64 {
    match f {
        Alu::Add => a.wrapping_add(b),
        Alu::Sub => a.wrapping_sub(b),
        Alu::And => a & b,
        Alu::Or => a | b,
        Alu::Sll => a.wrapping_shl(b as u32),
        Alu::Srl => a.wrapping_shr(b as u32),
        Alu::Fadd => (f64::from_bits(a) + f64::from_bits(b)).to_bits(),
        Alu::Fmul => (f64::from_bits(a) * f64::from_bits(b)).to_bits(),
        Alu::Fdiv => (f64::from_bits(a) / f64::from_bits(b)).to_bits(),
    }
}

/// Counters a lane accumulates while running.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LaneStats {
    /// Cycles in which an instruction executed (multi-cycle instructions count every cycle).
    pub busy_cycles: u64,
    pub instructions: u64,
    pub invocations: u64,
    pub threads_created: u64,
    pub threads_terminated: u64,
    pub thread_lifetime_sum: u64,
    pub dispatch_penalty_cycles: u64,
    pub events_received: u64,
    pub max_queue_depth: usize,
    pub high_water_events: u64,
    /// Instructions per invocation -> count.
    pub invocation_instrs: BTreeMap<u64, u64>,
    /// DRAM requests per invocation -> count.
    pub invocation_mem_refs: BTreeMap<u64, u64>,
    /// Invocations per handler label id.
    pub label_invocations: Vec<u64>,
    pub first_thread_cycle: Option<u64>,
    pub last_thread_cycle: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Active {
    tid: u8,
    pc: usize,
    instrs: u64,
    mem_refs: u64,
}

pub struct Lane {
    pub id: u32,
    cfg: LaneConfig,
    code: Arc<Microcode>,
    queue: VecDeque<Event>,
    bound_in_queue: usize,
    contexts: Vec<ThreadContext>,
    free: usize,
    scratch: Vec<u64>,
    active: Option<Active>,
    ob: [u64; MAX_OPERANDS],
    eops: u64,
    elabel: u64,
    econt: u64,
    esrc: u64,
    stall: u64,
    busy: u64,
    waiting_mem: bool,
    pub stats: LaneStats,
}

impl fmt::Debug for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lane")
            .field("id", &self.id)
            .field("queue", &self.queue.len())
            .field("active", &self.active)
            .field("free", &self.free)
            .finish()
    }
}

impl Lane {
    pub fn new(id: u32, cfg: LaneConfig, code: Arc<Microcode>) -> Self {
        let contexts = (0..cfg.contexts.clamp(1, CONTEXTS_PER_LANE))
            .map(|t| ThreadContext { tid: t as u8, gprs: [0; NUM_GPRS], state: ThreadState::Free, spawn_cycle: 0 })
            .collect::<Vec<_>>();
        let stats = LaneStats { label_invocations: vec![0; code.num_labels()], ..Default::default() };
        Self {
            id,
            free: contexts.len(),
            cfg,
            code,
            queue: VecDeque::new(),
            bound_in_queue: 0,
            contexts,
            scratch: vec![0; SCRATCH_WORDS],
            active: None,
            ob: [0; MAX_OPERANDS],
            eops: 0,
            elabel: 0,
            econt: 0,
            esrc: 0,
            stall: 0,
            busy: 0,
            waiting_mem: false,
            stats,
        }
    }

    pub fn enqueue(&mut self, e: Event) {
        if !e.evword.is_new() {
            self.bound_in_queue += 1;
        }
        self.queue.push_back(e);
        self.stats.events_received += 1;
        let depth = self.queue.len();
        self.stats.max_queue_depth = self.stats.max_queue_depth.max(depth);
        if depth > self.cfg.queue_high_water {
            self.stats.high_water_events += 1;
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn queued(&self) -> impl Iterator<Item = &Event> {
        self.queue.iter()
    }

    pub fn contexts(&self) -> &[ThreadContext] {
        &self.contexts
    }

    pub fn active_tid(&self) -> Option<u8> {
        self.active.map(|a| a.tid)
    }

    /// Thread state counts `(free, suspended, active)`.
    pub fn context_counts(&self) -> (usize, usize, usize) {
        let active = self.contexts.iter().filter(|c| c.state == ThreadState::Active).count();
        (self.free, self.contexts.len() - self.free - active, active)
    }

    pub fn operand_buffer(&self) -> (&[u64], u64) {
        (&self.ob[..self.eops as usize], self.eops)
    }

    pub fn pc(&self) -> Option<usize> {
        self.active.map(|a| a.pc)
    }

    pub fn is_waiting_on_memory(&self) -> bool {
        self.waiting_mem
    }

    /// Called when the response to this lane's blocking request has been delivered.
    pub fn memory_response_arrived(&mut self) {
        self.waiting_mem = false;
    }

    pub fn scratch_read(&self, addr: u64) -> Result<u64, FaultKind> {
        self.scratch_index(addr).map(|i| self.scratch[i])
    }

    pub fn scratch_write(&mut self, addr: u64, value: u64) -> Result<(), FaultKind> {
        let i = self.scratch_index(addr)?;
        self.scratch[i] = value;
        Ok(())
    }

    fn scratch_index(&self, addr: u64) -> Result<usize, FaultKind> {
        if addr >= SCRATCHPAD_BYTES {
            return Err(FaultKind::ScratchOutOfBounds { addr });
        }
        if addr % 8 != 0 {
            return Err(FaultKind::ScratchMisaligned { addr });
        }
        Ok((addr / 8) as usize)
    }

    /// True when the lane cannot do anything until an event or memory response arrives.
    pub fn is_quiet(&self) -> bool {
        self.active.is_none()
            && self.stall == 0
            && self.busy == 0
            && (self.waiting_mem || self.queue.is_empty() || self.pick_event().is_none())
    }

    /// True when there is no thread running and nothing queued.
    pub fn is_idle(&self) -> bool {
        self.active.is_none() && self.stall == 0 && self.busy == 0 && !self.waiting_mem && self.queue.is_empty()
    }

    fn fault(&self, cycle: u64, kind: FaultKind) -> Fault {
        Fault { lane: self.id, tid: self.active.map(|a| a.tid), pc: self.active.map(|a| a.pc), cycle, kind }
    }

    /// Index of the next dispatchable event: the head, or when the head needs a fresh
    /// context and none is free, the first event bound to an existing thread.
    fn pick_event(&self) -> Option<usize> {
        let head = self.queue.front()?;
        if !head.evword.is_new() || self.free > 0 {
            return Some(0);
        }
        if self.bound_in_queue == 0 {
            return None;
        }
        self.queue.iter().position(|e| !e.evword.is_new())
    }

    fn try_dispatch(&mut self, cycle: u64) -> Result<bool, Fault> {
        let Some(idx) = self.pick_event() else {
            return Ok(false);
        };
        let ev = self.queue.remove(idx).expect("picked index is in range");
        let label = ev.evword.label();
        if label as usize >= self.code.num_labels() {
            return Err(self.fault(cycle, FaultKind::UnknownLabel { label }));
        }
        let tid = if ev.evword.is_new() {
            let ctx = self
                .contexts
                .iter_mut()
                .find(|c| c.state == ThreadState::Free)
                .expect("free count says a context is free");
            ctx.state = ThreadState::Active;
            ctx.spawn_cycle = cycle;
            ctx.gprs = [0; NUM_GPRS];
            self.free -= 1;
            self.stats.threads_created += 1;
            self.stats.first_thread_cycle.get_or_insert(cycle);
            self.stats.last_thread_cycle = Some(cycle);
            ctx.tid
        } else {
            self.bound_in_queue -= 1;
            let tid = ev.evword.thread();
            match self.contexts.get_mut(tid as usize) {
                Some(ctx) if ctx.state == ThreadState::Suspended => {
                    ctx.state = ThreadState::Active;
                    tid
                }
                _ => return Err(self.fault(cycle, FaultKind::DanglingThread { tid })),
            }
        };
        let ops = ev.operands();
        self.ob = [0; MAX_OPERANDS];
        self.ob[..ops.len()].copy_from_slice(ops);
        self.eops = ops.len() as u64;
        self.elabel = label as u64;
        self.econt = ev.continuation;
        self.esrc = ev.src.esrc();
        self.active = Some(Active { tid, pc: self.code.entries[label as usize], instrs: 0, mem_refs: 0 });
        self.stats.invocations += 1;
        self.stats.label_invocations[label as usize] += 1;
        let penalty = self.cfg.dispatch_penalty + self.cfg.dispatch_cycles_per_operand * self.eops;
        self.stall = penalty;
        self.stats.dispatch_penalty_cycles += penalty;
        Ok(true)
    }

    fn read(&self, s: Src, tid: u8, cycle: u64) -> u64 {
        match s {
            Src::Gpr(g) => self.contexts[tid as usize].gprs[g as usize],
            Src::Ob(o) => self.ob[o as usize],
            Src::Sr(sr) => match sr {
                Special::Nwid => self.id as u64,
                Special::Tid => tid as u64,
                Special::Elabel => self.elabel,
                Special::Econt => self.econt,
                Special::Eops => self.eops,
                Special::Esrc => self.esrc,
                Special::Cycle => cycle,
                Special::Zero => 0,
            },
        }
    }

    /// Advances the lane one cycle, appending any emitted messages to `out`.
    pub fn step(&mut self, cycle: u64, out: &mut Vec<Outbound>) -> Result<(), Fault> {
        if self.busy > 0 {
            self.busy -= 1;
            self.stats.busy_cycles += 1;
            return Ok(());
        }
        if self.stall > 0 {
            self.stall -= 1;
            return Ok(());
        }
        if self.waiting_mem {
            return Ok(());
        }
        if self.active.is_none() {
            self.try_dispatch(cycle)?;
            return Ok(());
        }
        let ended = self.execute(cycle, out)?;
        self.stats.busy_cycles += 1;
        self.stats.instructions += 1;
        if ended && self.busy == 0 {
            // The yielding cycle also performs the next dispatch.
            self.try_dispatch(cycle)?;
        }
        Ok(())
    }

    fn end_invocation(&mut self, a: Active, terminate: bool, cycle: u64) {
        *self.stats.invocation_instrs.entry(a.instrs).or_default() += 1;
        *self.stats.invocation_mem_refs.entry(a.mem_refs).or_default() += 1;
        let ctx = &mut self.contexts[a.tid as usize];
        if terminate {
            ctx.state = ThreadState::Free;
            self.free += 1;
            self.stats.threads_terminated += 1;
            self.stats.thread_lifetime_sum += cycle + 1 - ctx.spawn_cycle;
        } else {
            ctx.state = ThreadState::Suspended;
        }
        self.active = None;
        self.eops = 0;
    }

    fn event_word(&self, raw: u64, cycle: u64) -> Result<EventWord, Fault> {
        let w = EventWord(raw);
        if w.is_null() || !w.is_well_formed() {
            return Err(self.fault(cycle, FaultKind::MalformedEventWord { word: raw }));
        }
        Ok(w)
    }

    /// Executes the instruction at the active pc. Returns true if the invocation ended.
    fn execute(&mut self, cycle: u64, out: &mut Vec<Outbound>) -> Result<bool, Fault> {
        let mut a = self.active.expect("execute requires an active thread");
        let op = self.code.ops[a.pc];
        let tid = a.tid;
        let origin = Origin { lane: self.id, tid, pc: a.pc };
        a.instrs += 1;
        let mut next = a.pc + 1;
        macro_rules! r {
            ($s:expr) => {
                self.read($s, tid, cycle)
            };
        }
        macro_rules! set {
            ($d:expr, $v:expr) => {{
                let v = $v;
                self.contexts[tid as usize].gprs[$d as usize] = v;
            }};
        }
        macro_rules! scratch {
            ($res:expr) => {
                $res.map_err(|k| self.fault(cycle, k))?
            };
        }
        match op {
            Op::Yield | Op::Yieldt => {
                self.end_invocation(a, matches!(op, Op::Yieldt), cycle);
                return Ok(true);
            }
            Op::Ev { d, lane, tid: t, label } => {
                let w = EventWord::new(r!(lane) as u32, r!(t) as u8, label);
                set!(d, w.0);
            }
            Op::Evi { d, lane, label } => set!(d, EventWord::new_thread(r!(lane) as u32, label).0),
            Op::Evii { d, lane, label } => set!(d, EventWord::new_thread(lane, label).0),
            Op::Send { ev, base, n } => {
                let w = self.event_word(r!(ev), cycle)?;
                let regs = &self.contexts[tid as usize].gprs[base as usize..base as usize + n as usize];
                let event = Event::new(w, regs, EventWord::NULL.0, Source::Lane(self.id));
                out.push(Outbound::Event { event, origin });
            }
            Op::Sendr { ev, a: x, b: y } => {
                let w = self.event_word(r!(ev), cycle)?;
                let event = Event::new(w, &[r!(x), r!(y)], EventWord::NULL.0, Source::Lane(self.id));
                out.push(Outbound::Event { event, origin });
            }
            Op::Sendops { ev } => {
                let w = self.event_word(r!(ev), cycle)?;
                let event =
                    Event::new(w, &self.ob[..self.eops as usize], EventWord::NULL.0, Source::Lane(self.id));
                out.push(Outbound::Event { event, origin });
            }
            Op::Sendm { cont, addr, n, kind, base } => {
                let payload = match kind {
                    MemKind::Read => Vec::new(),
                    MemKind::Write => {
                        self.contexts[tid as usize].gprs[base as usize..base as usize + n as usize].to_vec()
                    }
                };
                self.emit_mem(r!(cont), r!(addr), n as usize, kind, payload, cycle, origin, out);
                a.mem_refs += 1;
            }
            Op::Sendmr { cont, addr, a: x, b: y } => {
                let payload = vec![r!(x), r!(y)];
                self.emit_mem(r!(cont), r!(addr), 2, MemKind::Write, payload, cycle, origin, out);
                a.mem_refs += 1;
            }
            Op::Sendmops { cont, addr } => {
                if !(1..=8).contains(&self.eops) {
                    return Err(self.fault(cycle, FaultKind::OperandCount { n: self.eops }));
                }
                let payload = self.ob[..self.eops as usize].to_vec();
                self.emit_mem(r!(cont), r!(addr), self.eops as usize, MemKind::Write, payload, cycle, origin, out);
                a.mem_refs += 1;
            }
            Op::Alu { f, d, a: x, b: y } => set!(d, alu(f, r!(x), r!(y))),
            Op::AluI { f, d, a: x, imm } => set!(d, alu(f, r!(x), imm)),
            Op::Movir { d, imm } => set!(d, imm),
            Op::Fcvt { d, a: x } => set!(d, (r!(x) as i64 as f64).to_bits()),
            Op::Br { c, a: x, b: y, target } => {
                let (x, y) = (r!(x) as i64, r!(y) as i64);
                let taken = match c {
                    Cond::Eq => x == y,
                    Cond::Le => x <= y,
                    Cond::Gt => x > y,
                };
                if taken {
                    next = target;
                }
            }
            Op::Movlr { d, addr, off } => {
                let v = scratch!(self.scratch_read(r!(addr).wrapping_add(off as u64)));
                set!(d, v);
            }
            Op::Movrl { s, addr, off } => {
                let v = r!(s);
                scratch!(self.scratch_write(r!(addr).wrapping_add(off as u64), v));
            }
            Op::Bcpy { dst, src, n } => {
                let (dst, src, n) = (r!(dst), r!(src), r!(n));
                let words = self.copy_words(dst, src, n, None, cycle)?;
                self.busy = words.max(1) - 1;
            }
            Op::Bcpyol { dst } => {
                let dst = r!(dst);
                for i in 0..self.eops {
                    let v = self.ob[i as usize];
                    scratch!(self.scratch_write(dst.wrapping_add(8 * i), v));
                }
            }
            Op::Cstr { count, dst, src, len, key } => {
                let (dst, src, len, key) = (r!(dst), r!(src), r!(len), r!(key));
                let copied = self.copy_words(dst, src, len, Some(key), cycle)?;
                set!(count, copied);
                self.busy = copied.max(1) - 1;
            }
            Op::Cswp { d, addr, expected, new } => {
                let addr = r!(addr);
                let (expected, new) = (r!(expected), r!(new));
                let cur = scratch!(self.scratch_read(addr));
                if cur == expected {
                    scratch!(self.scratch_write(addr, new));
                    set!(d, 1);
                } else {
                    set!(d, 0);
                }
            }
        }
        a.pc = next;
        self.active = Some(a);
        Ok(false)
    }

    /// Word copy used by `bcpy` (no key) and `cstr` (stop at the first source word >= key,
    /// compared as signed). Returns the number of words copied.
    fn copy_words(&mut self, dst: u64, src: u64, n: u64, key: Option<u64>, cycle: u64) -> Result<u64, Fault> {
        let mut copied = 0;
        while copied < n {
            let v = self.scratch_read(src.wrapping_add(8 * copied)).map_err(|k| self.fault(cycle, k))?;
            if let Some(k) = key {
                if v as i64 >= k as i64 {
                    break;
                }
            }
            self.scratch_write(dst.wrapping_add(8 * copied), v).map_err(|k| self.fault(cycle, k))?;
            copied += 1;
        }
        Ok(copied)
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_mem(
        &mut self,
        cont: u64,
        addr: u64,
        nwords: usize,
        kind: MemKind,
        payload: Vec<u64>,
        cycle: u64,
        origin: Origin,
        out: &mut Vec<Outbound>,
    ) {
        let req = MemRequest {
            req_id: 0,
            addr,
            nwords,
            kind,
            payload,
            continuation: cont,
            issue_cycle: cycle,
            src_lane: self.id,
        };
        out.push(Outbound::Mem { req, origin });
        if self.cfg.blocking_memory {
            self.waiting_mem = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    fn lane_with(src: &str, cfg: LaneConfig) -> (Lane, ProgramImage) {
        let img = assemble(src).unwrap();
        (Lane::new(0, cfg, Arc::new(Microcode::new(&img))), img)
    }

    fn ev(img: &ProgramImage, label: &str, ops: &[u64]) -> Event {
        Event::new(EventWord::new_thread(0, img.label_id(label).unwrap()), ops, EventWord::NULL.0, Source::Host)
    }

    fn run(lane: &mut Lane, cycles: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        for c in 0..cycles {
            lane.step(c, &mut out).unwrap();
        }
        out
    }

    #[test]
    fn event_word_packing() {
        let w = EventWord::new(12345, 7, 99);
        assert_eq!((w.lane(), w.thread(), w.label()), (12345, 7, 99));
        assert!(EventWord::new_thread(3, 1).is_new());
        assert!(!EventWord::NULL.is_well_formed());
    }

    #[test]
    fn fifo_and_high_water() {
        let (mut lane, img) = lane_with(".event a\na:\n  yieldt\n", LaneConfig { queue_high_water: 2, ..Default::default() });
        for i in 0..3 {
            lane.enqueue(ev(&img, "a", &[i]));
        }
        let order: Vec<u64> = lane.queued().map(|e| e.operands()[0]).collect();
        assert_eq!(order, vec![0, 1, 2]);
        assert_eq!(lane.stats.high_water_events, 1);
    }

    #[test]
    fn dispatch_maps_operands() {
        let (mut lane, img) = lane_with(".event intersect\nintersect:\n  yieldt\n", LaneConfig::default());
        lane.enqueue(ev(&img, "intersect", &[0x1000, 0x2000]));
        let mut out = Vec::new();
        lane.step(0, &mut out).unwrap();
        assert_eq!(lane.operand_buffer(), (&[0x1000u64, 0x2000][..], 2));
        assert_eq!(lane.pc(), Some(img.handler("intersect").unwrap().entry));
        assert_eq!(lane.context_counts(), (127, 0, 1));
        assert_eq!(lane.stats.busy_cycles, 0);
    }

    #[test]
    fn empty_queue_is_idle() {
        let (mut lane, _) = lane_with(".event a\na:\n  yieldt\n", LaneConfig::default());
        run(&mut lane, 5);
        assert!(lane.is_idle());
        assert_eq!(lane.stats.invocations, 0);
    }

    #[test]
    fn add_then_yieldt() {
        let (mut lane, img) =
            lane_with(".event a\na:\n  movir X1, 2\n  movir X2, 3\n  add X3, X1, X2\n  yieldt\n", LaneConfig::default());
        lane.enqueue(ev(&img, "a", &[]));
        let mut out = Vec::new();
        for c in 0..3 {
            lane.step(c, &mut out).unwrap();
        }
        assert_eq!(lane.contexts()[0].gprs[1..4], [2, 3, 0]);
        lane.step(3, &mut out).unwrap();
        assert_eq!(lane.contexts()[0].gprs[3], 5);
        lane.step(4, &mut out).unwrap();
        assert_eq!(lane.context_counts(), (128, 0, 0));
        assert_eq!(lane.stats.threads_terminated, 1);
        assert!(lane.is_idle());
        assert_eq!(lane.stats.busy_cycles, 4);
    }

    #[test]
    fn context_exhaustion_blocks_new_head() {
        let src = ".event park, wake, spawn\npark:\n  yield\nwake:\n  yieldt\nspawn:\n  yieldt\n";
        let (mut lane, img) = lane_with(src, LaneConfig::default());
        for _ in 0..128 {
            lane.enqueue(ev(&img, "park", &[]));
        }
        run(&mut lane, 300);
        assert_eq!(lane.context_counts(), (0, 128, 0));
        lane.enqueue(ev(&img, "spawn", &[]));
        let mut out = Vec::new();
        for c in 300..310 {
            lane.step(c, &mut out).unwrap();
        }
        assert_eq!(lane.queue_len(), 1, "NEW head must wait for a free context");
        let wake = Event::new(EventWord::new(0, 5, img.label_id("wake").unwrap()), &[], EventWord::NULL.0, Source::Host);
        lane.enqueue(wake);
        for c in 310..320 {
            lane.step(c, &mut out).unwrap();
        }
        assert_eq!(lane.queue_len(), 0);
        assert_eq!(lane.context_counts(), (1, 127, 0));
        assert_eq!(lane.stats.threads_created, 129);
    }

    #[test]
    fn dangling_binding_faults() {
        let (mut lane, img) = lane_with(".event a\na:\n  yieldt\n", LaneConfig::default());
        lane.enqueue(Event::new(EventWord::new(0, 3, img.label_id("a").unwrap()), &[], u64::MAX, Source::Host));
        let err = lane.step(0, &mut Vec::new()).unwrap_err();
        assert_eq!(err.kind, FaultKind::DanglingThread { tid: 3 });
    }

    #[test]
    fn scratch_faults() {
        let (mut lane, img) = lane_with(".event a\na:\n  movir X1, 65536\n  movlr X2, X1, 0\n  yieldt\n", LaneConfig::default());
        lane.enqueue(ev(&img, "a", &[]));
        let mut out = Vec::new();
        lane.step(0, &mut out).unwrap();
        lane.step(1, &mut out).unwrap();
        let f = lane.step(2, &mut out).unwrap_err();
        assert_eq!(f.kind, FaultKind::ScratchOutOfBounds { addr: 65536 });
        assert_eq!(f.pc, Some(1));
    }
}
