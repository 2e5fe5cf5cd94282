//! Instruction-level, cycle-approximate model of an UpDown-style accelerator node.
//!
//! The crate is layered bottom-up:
//!
//! * [`isa`] defines the instruction set, the assembler, disassembler and static validator.
//! * [`lane`] models a single event-driven lane: event queue, 128 thread contexts,
//!   single-cycle dispatch and a 64KB scratchpad.
//! * [`memory`] is the split-transaction DRAM model (latency plus per-channel pacing).
//! * [`fabric`] composes lanes, accelerators and memory into a node and runs it to quiescence.
//! * [`kernels`] holds the graph loader, DRAM layout, the assembly workloads and host oracles.
//! * [`harness`] collects statistics, applies ablation configurations and runs microbenchmarks.

pub mod fabric;
pub mod harness;
pub mod isa;
pub mod kernels;
pub mod lane;
pub mod memory;
pub mod stats;

pub use fabric::{NodeConfig, SimResult, Simulation};
pub use isa::{assemble, disassemble, validate, ProgramImage};
