use std::fmt;

use super::{Opcode, Operand, ProgramImage, Reg, Slot, MAX_OPERANDS, NUM_GPRS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// A control-flow path reaches the end of the body without `yield`/`yieldt`.
    FallThrough,
    /// DRAM access size outside 1..=8 words.
    MemWords,
    /// Event operand count outside 0..=8.
    SendOperands,
    /// Register window runs past X15.
    Window,
    /// Operand does not match the opcode signature.
    Signature,
    BranchTarget,
    EventLabel,
    LabelTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub handler: String,
    /// Absolute index into the code store, when the diagnostic concerns one instruction.
    pub instruction: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.instruction {
            Some(i) => write!(f, "{}[{}]: {:?}: {}", self.handler, i, self.rule, self.message),
            None => write!(f, "{}: {:?}: {}", self.handler, self.rule, self.message),
        }
    }
}

fn slot_ok(slot: Slot, op: &Operand) -> bool {
    match (slot, op) {
        (Slot::Dst | Slot::Window, Operand::Reg(Reg::Gpr(i))) => (*i as usize) < NUM_GPRS,
        (Slot::Src, Operand::Reg(r)) => match r {
            Reg::Gpr(i) => (*i as usize) < NUM_GPRS,
            Reg::Operand(i) => (*i as usize) < MAX_OPERANDS,
            Reg::Special(_) => true,
        },
        (Slot::Imm, Operand::Imm(_)) => true,
        (Slot::Code, Operand::Code { .. }) => true,
        (Slot::Event, Operand::Event { .. }) => true,
        (Slot::New, Operand::New) => true,
        (Slot::Mode, Operand::Mode(_)) => true,
        _ => false,
    }
}

/// Checks every static invariant of an image. An empty result means the image is valid.
pub fn validate(image: &ProgramImage) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for (i, h) in image.handlers.iter().enumerate() {
        if h.id as usize != i || image.label_table.get(&h.label) != Some(&h.id) {
            out.push(Diagnostic {
                handler: h.label.clone(),
                instruction: None,
                rule: Rule::LabelTable,
                message: "handler id does not match the label table".into(),
            });
        }
    }
    if image.label_table.len() != image.handlers.len() {
        out.push(Diagnostic {
            handler: String::new(),
            instruction: None,
            rule: Rule::LabelTable,
            message: "label table and handler list differ in size".into(),
        });
    }

    for h in &image.handlers {
        if h.entry + h.len > image.code.len() {
            out.push(Diagnostic {
                handler: h.label.clone(),
                instruction: None,
                rule: Rule::LabelTable,
                message: "handler body exceeds the code store".into(),
            });
            continue;
        }
        let body = image.body(h);
        let mut diag = |idx: usize, rule: Rule, message: String| {
            out.push(Diagnostic { handler: h.label.clone(), instruction: Some(h.entry + idx), rule, message });
        };

        for (idx, ins) in body.iter().enumerate() {
            let sig = ins.op.signature();
            if sig.len() != ins.operands.len() || !sig.iter().zip(&ins.operands).all(|(s, o)| slot_ok(*s, o)) {
                diag(idx, Rule::Signature, format!("`{ins}` does not match the {} signature", ins.op.mnemonic()));
                continue;
            }
            for op in &ins.operands {
                match op {
                    Operand::Code { target, .. } if *target >= body.len() => {
                        diag(idx, Rule::BranchTarget, format!("branch target {target} outside handler"))
                    }
                    Operand::Event { name, id } if image.label_table.get(name) != Some(id) => {
                        diag(idx, Rule::EventLabel, format!("event label @{name} does not resolve"))
                    }
                    _ => {}
                }
            }
            match ins.op {
                Opcode::Sendm => {
                    let n = ins.imm(2);
                    if !(1..=8).contains(&n) {
                        diag(idx, Rule::MemWords, format!("DRAM access of {n} words; must be 1..=8"));
                    } else if let (Operand::Mode(super::MemKind::Write), Reg::Gpr(g)) = (&ins.operands[3], ins.reg(4)) {
                        if g as i64 + n > NUM_GPRS as i64 {
                            diag(idx, Rule::Window, format!("write data window X{g}+{n} runs past X15"));
                        }
                    }
                }
                Opcode::Send => {
                    let n = ins.imm(2);
                    if !(0..=MAX_OPERANDS as i64).contains(&n) {
                        diag(idx, Rule::SendOperands, format!("event with {n} operands; must be 0..=8"));
                    } else if let Reg::Gpr(g) = ins.reg(1) {
                        if g as i64 + n > NUM_GPRS as i64 {
                            diag(idx, Rule::Window, format!("operand window X{g}+{n} runs past X15"));
                        }
                    }
                }
                Opcode::Evii if ins.imm(1) < 0 => {
                    diag(idx, Rule::Signature, "negative lane id".into());
                }
                _ => {}
            }
        }

        // Every reachable path must end in yield/yieldt.
        let mut seen = vec![false; body.len()];
        let mut stack = if body.is_empty() { Vec::new() } else { vec![0usize] };
        let mut fell_through = body.is_empty();
        let mut fall_at = None;
        while let Some(pc) = stack.pop() {
            if pc >= body.len() || seen[pc] {
                continue;
            }
            seen[pc] = true;
            let ins = &body[pc];
            let mut succ: Vec<usize> = Vec::with_capacity(2);
            match ins.op {
                Opcode::Yield | Opcode::Yieldt => {}
                Opcode::Beq | Opcode::Ble | Opcode::Bgt => {
                    if let Some(Operand::Code { target, .. }) = ins.operands.get(2) {
                        succ.push(*target);
                    }
                    let always = matches!(ins.op, Opcode::Beq | Opcode::Ble)
                        && ins.operands.first() == ins.operands.get(1);
                    if !always {
                        succ.push(pc + 1);
                    }
                }
                _ => succ.push(pc + 1),
            }
            for s in succ {
                if s >= body.len() {
                    fell_through = true;
                    fall_at.get_or_insert(pc);
                } else {
                    stack.push(s);
                }
            }
        }
        if fell_through {
            out.push(Diagnostic {
                handler: h.label.clone(),
                instruction: fall_at.map(|i| h.entry + i),
                rule: Rule::FallThrough,
                message: "control reaches end of handler without yield/yieldt".into(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    #[test]
    fn valid_image_has_no_diagnostics() {
        let img = assemble(".event a\na:\n  movir X1, 2\nL0:\n  subi X1, X1, 1\n  bgt X1, ZERO, L0\n  yieldt\n").unwrap();
        assert!(validate(&img).is_empty());
    }

    #[test]
    fn fall_through_is_one_diagnostic() {
        let mut img = assemble(".event a\na:\n  addi X1, X1, 1\n  yield\n").unwrap();
        img.code.pop();
        img.handlers[0].len = 1;
        let d = validate(&img);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule, Rule::FallThrough);
        assert_eq!(d[0].handler, "a");
    }

    #[test]
    fn taken_branch_path_must_yield_too() {
        let mut img = assemble(".event a\na:\n  beq X1, X2, L1\n  yieldt\nL1:\n  addi X1, X1, 1\n  yield\n").unwrap();
        assert!(validate(&img).is_empty());
        img.code.pop();
        img.handlers[0].len = 3;
        let d = validate(&img);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule, Rule::FallThrough);
        assert_eq!(d[0].instruction, Some(2));
    }

    #[test]
    fn unconditional_branch_has_no_fall_through() {
        let img = assemble(".event a\na:\nL0:\n  yield\nL1:\n  beq ZERO, ZERO, L0\n").unwrap();
        assert!(validate(&img).is_empty());
    }

    #[test]
    fn sendm_nine_words() {
        let mut img = assemble(".event a\na:\n  sendm X1, X2, 8, R, X0\n  yieldt\n").unwrap();
        img.code[0].operands[2] = Operand::Imm(9);
        let d = validate(&img);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule, Rule::MemWords);
        assert_eq!(d[0].instruction, Some(0));
    }

    #[test]
    fn write_window_bounds() {
        let img = assemble(".event a\na:\n  sendm X1, X2, 8, W, X8\n  yieldt\n").unwrap();
        assert!(validate(&img).is_empty());
        let err = assemble(".event a\na:\n  sendm X1, X2, 8, W, X9\n  yieldt\n").unwrap_err();
        assert!(err.to_string().contains("runs past X15"), "{err}");
    }

    #[test]
    fn send_operand_count() {
        let err = assemble(".event a\na:\n  send X1, X0, 9\n  yieldt\n").unwrap_err();
        assert!(err.to_string().contains("must be 0..=8"), "{err}");
    }
}
