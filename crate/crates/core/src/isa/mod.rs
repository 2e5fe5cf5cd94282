//! Instruction set: register names, opcodes, operand signatures and the program image.
//!
//! Programs are written as line-oriented assembly (see [`asm`]) and assembled into a
//! [`ProgramImage`], the unit loaded onto every lane. There is no binary encoding; the
//! simulator executes the in-memory form directly.

mod asm;
mod disasm;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use asm::{assemble, AsmError};
pub use disasm::disassemble;
pub use validate::{validate, Diagnostic, Rule};

/// Number of general purpose registers per thread context.
pub const NUM_GPRS: usize = 16;
/// Maximum number of operand words carried by an event.
pub const MAX_OPERANDS: usize = 8;
/// Number of special registers.
pub const NUM_SPECIALS: usize = 8;

/// Special registers, numbered SR0..SR7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Special {
    /// Global lane id.
    Nwid,
    /// Current thread id.
    Tid,
    /// Numeric label of the dispatched event.
    Elabel,
    /// Continuation word of the dispatched event.
    Econt,
    /// Operand count of the dispatched event.
    Eops,
    /// Source lane of the dispatched event.
    Esrc,
    /// Low 64 bits of the lane cycle counter.
    Cycle,
    /// Constant zero.
    Zero,
}

impl Special {
    pub const ALL: [Special; NUM_SPECIALS] = [
        Special::Nwid,
        Special::Tid,
        Special::Elabel,
        Special::Econt,
        Special::Eops,
        Special::Esrc,
        Special::Cycle,
        Special::Zero,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Special::Nwid => "NWID",
            Special::Tid => "TID",
            Special::Elabel => "ELABEL",
            Special::Econt => "ECONT",
            Special::Eops => "EOPS",
            Special::Esrc => "ESRC",
            Special::Cycle => "CYCLE",
            Special::Zero => "ZERO",
        }
    }

    pub fn from_name(name: &str) -> Option<Special> {
        Special::ALL.iter().copied().find(|s| s.name() == name)
    }
}

/// A register operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reg {
    Gpr(u8),
    Operand(u8),
    Special(Special),
}

impl Reg {
    pub fn is_gpr(self) -> bool {
        matches!(self, Reg::Gpr(_))
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reg::Gpr(i) => write!(f, "X{i}"),
            Reg::Operand(i) => write!(f, "OB{i}"),
            Reg::Special(s) => f.write_str(s.name()),
        }
    }
}

/// Direction of a DRAM access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(i64),
    /// Branch target, as an index into the enclosing handler body.
    Code { name: String, target: usize },
    /// Event label with its dense numeric id.
    Event { name: String, id: u16 },
    /// The `NEW` thread binding keyword.
    New,
    Mode(MemKind),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => r.fmt(f),
            Operand::Imm(v) => write!(f, "{v}"),
            Operand::Code { name, .. } => f.write_str(name),
            Operand::Event { name, .. } => write!(f, "@{name}"),
            Operand::New => f.write_str("NEW"),
            Operand::Mode(MemKind::Read) => f.write_str("R"),
            Operand::Mode(MemKind::Write) => f.write_str("W"),
        }
    }
}

/// Operand kinds used by the signature table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Destination: must be a GPR.
    Dst,
    /// Any readable register.
    Src,
    /// A GPR used as the base of a register window.
    Window,
    Imm,
    Code,
    Event,
    New,
    Mode,
}

macro_rules! opcodes {
    ($($variant:ident => $mnemonic:literal [$($slot:ident),*] $ext:literal;)*) => {
        /// Every mnemonic the assembler accepts.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Opcode { $($variant),* }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant),*];

            pub fn mnemonic(self) -> &'static str {
                match self { $(Opcode::$variant => $mnemonic),* }
            }

            /// Operand signature, one entry per operand.
            pub fn signature(self) -> &'static [Slot] {
                match self { $(Opcode::$variant => &[$(Slot::$slot),*]),* }
            }

            /// True for instructions added beyond the base instruction set
            /// (immediate forms, shifts, double-precision arithmetic).
            pub fn is_extension(self) -> bool {
                match self { $(Opcode::$variant => $ext),* }
            }

            pub fn from_mnemonic(m: &str) -> Option<Opcode> {
                match m { $($mnemonic => Some(Opcode::$variant),)* _ => None }
            }
        }
    };
}

opcodes! {
    Yield => "yield" [] false;
    Yieldt => "yieldt" [] false;
    Ev => "ev" [Dst, Src, Src, Event] false;
    Evi => "evi" [Dst, Src, New, Event] false;
    Evii => "evii" [Dst, Imm, New, Event] false;
    Send => "send" [Src, Window, Imm] false;
    Sendr => "sendr" [Src, Src, Src] false;
    Sendops => "sendops" [Src] false;
    Sendm => "sendm" [Src, Src, Imm, Mode, Window] false;
    Sendmr => "sendmr" [Src, Src, Src, Src] false;
    Sendmops => "sendmops" [Src, Src] false;
    Add => "add" [Dst, Src, Src] false;
    Sub => "sub" [Dst, Src, Src] false;
    And => "and" [Dst, Src, Src] false;
    Or => "or" [Dst, Src, Src] false;
    Beq => "beq" [Src, Src, Code] false;
    Ble => "ble" [Src, Src, Code] false;
    Bgt => "bgt" [Src, Src, Code] false;
    Movlr => "movlr" [Dst, Src, Imm] false;
    Movrl => "movrl" [Src, Src, Imm] false;
    Bcpy => "bcpy" [Src, Src, Src] false;
    Bcpyol => "bcpyol" [Src] false;
    Cstr => "cstr" [Dst, Src, Src, Src, Src] false;
    Cswp => "cswp" [Dst, Src, Src, Src] false;
    Addi => "addi" [Dst, Src, Imm] true;
    Subi => "subi" [Dst, Src, Imm] true;
    Andi => "andi" [Dst, Src, Imm] true;
    Ori => "ori" [Dst, Src, Imm] true;
    Movir => "movir" [Dst, Imm] true;
    Slli => "slli" [Dst, Src, Imm] true;
    Srli => "srli" [Dst, Src, Imm] true;
    Fadd => "fadd" [Dst, Src, Src] true;
    Fmul => "fmul" [Dst, Src, Src] true;
    Fdiv => "fdiv" [Dst, Src, Src] true;
    Fcvt => "fcvt" [Dst, Src] true;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub op: Opcode,
    pub operands: Vec<Operand>,
}

impl Instruction {
    pub fn new(op: Opcode, operands: Vec<Operand>) -> Self {
        Self { op, operands }
    }

    pub fn reg(&self, i: usize) -> Reg {
        match &self.operands[i] {
            Operand::Reg(r) => *r,
            other => panic!("operand {i} of {} is not a register: {other}", self.op.mnemonic()),
        }
    }

    pub fn imm(&self, i: usize) -> i64 {
        match &self.operands[i] {
            Operand::Imm(v) => *v,
            other => panic!("operand {i} of {} is not an immediate: {other}", self.op.mnemonic()),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.op.mnemonic())?;
        for (i, op) in self.operands.iter().enumerate() {
            f.write_str(if i == 0 { " " } else { ", " })?;
            op.fmt(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventHandler {
    pub label: String,
    pub id: u16,
    /// Offset of the first instruction in [`ProgramImage::code`].
    pub entry: usize,
    pub len: usize,
}

/// An assembled program: handlers laid out in a flat code store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramImage {
    /// Handlers ordered by numeric id.
    pub handlers: Vec<EventHandler>,
    pub code: Vec<Instruction>,
    pub label_table: BTreeMap<String, u16>,
    /// Source line (1-based) of each instruction in `code`.
    pub source_map: Vec<usize>,
}

impl ProgramImage {
    pub fn handler(&self, label: &str) -> Option<&EventHandler> {
        self.label_table.get(label).map(|&id| &self.handlers[id as usize])
    }

    pub fn label_id(&self, label: &str) -> Option<u16> {
        self.label_table.get(label).copied()
    }

    pub fn body(&self, handler: &EventHandler) -> &[Instruction] {
        &self.code[handler.entry..handler.entry + handler.len]
    }

    /// Equality of handlers, opcodes and operands, ignoring source positions.
    pub fn structurally_eq(&self, other: &ProgramImage) -> bool {
        self.handlers == other.handlers && self.code == other.code && self.label_table == other.label_table
    }

    /// Deterministic serialized form (JSON).
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("program images always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_mnemonics_have_one_signature_each() {
        let base = [
            "yield", "yieldt", "ev", "evi", "evii", "send", "sendr", "sendops", "sendm", "sendmr", "sendmops",
            "add", "sub", "and", "or", "beq", "ble", "bgt", "movlr", "movrl", "bcpy", "bcpyol", "cstr", "cswp",
        ];
        assert_eq!(base.len(), 24);
        for m in base {
            let op = Opcode::from_mnemonic(m).unwrap_or_else(|| panic!("{m} missing"));
            assert!(!op.is_extension(), "{m}");
            assert_eq!(Opcode::ALL.iter().filter(|o| o.mnemonic() == m).count(), 1);
        }
        assert_eq!(Opcode::ALL.iter().filter(|o| !o.is_extension()).count(), 24);
    }

    #[test]
    fn special_names_round_trip() {
        for (i, s) in Special::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(Special::from_name(s.name()), Some(*s));
        }
    }
}
