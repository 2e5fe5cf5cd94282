use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    validate, EventHandler, Instruction, MemKind, Opcode, Operand, ProgramImage, Reg, Slot, Special, MAX_OPERANDS,
    NUM_GPRS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("{line}: `{mnemonic}` expects {expected} operands, found {found}")]
    Arity { line: usize, mnemonic: String, expected: usize, found: usize },
    #[error("{line}: operand {index} of `{mnemonic}`: {msg}")]
    OperandKind { line: usize, mnemonic: String, index: usize, msg: String },
    #[error("{line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("{line}: {msg}")]
    Label { line: usize, msg: String },
    #[error("{line}: operand register out of range: `{token}`")]
    OperandRegisterOutOfRange { line: usize, token: String },
    #[error("{line}: register out of range: `{token}`")]
    RegisterOutOfRange { line: usize, token: String },
    #[error("{line}: handler `{handler}` can fall through its end without yield/yieldt")]
    MissingYield { line: usize, handler: String },
    #[error("{line}: {msg}")]
    Invalid { line: usize, msg: String },
}

impl AsmError {
    pub fn line(&self) -> usize {
        match self {
            AsmError::Syntax { line, .. }
            | AsmError::UnknownMnemonic { line, .. }
            | AsmError::Arity { line, .. }
            | AsmError::OperandKind { line, .. }
            | AsmError::UnresolvedLabel { line, .. }
            | AsmError::Label { line, .. }
            | AsmError::OperandRegisterOutOfRange { line, .. }
            | AsmError::RegisterOutOfRange { line, .. }
            | AsmError::MissingYield { line, .. }
            | AsmError::Invalid { line, .. } => *line,
        }
    }
}

/// A raw operand token before resolution against the label tables.
enum Token {
    Reg(Reg),
    Imm(i64),
    Ident(String),
    EventRef(String),
}

struct PendingInstr {
    op: Opcode,
    tokens: Vec<(Token, usize)>,
    line: usize,
}

struct PendingHandler {
    label: String,
    line: usize,
    body: Vec<PendingInstr>,
    code_labels: BTreeMap<String, usize>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(&hex.replace('_', ""), 16).ok()?
    } else {
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '_') {
            return None;
        }
        body.replace('_', "").parse::<u64>().ok()?
    };
    if neg {
        if magnitude > i64::MAX as u64 + 1 {
            return None;
        }
        Some((magnitude as i64).wrapping_neg())
    } else {
        Some(magnitude as i64)
    }
}

fn parse_token(tok: &str, line: usize, col: usize) -> Result<Token, AsmError> {
    if let Some(idx) = tok.strip_prefix("OB") {
        if let Ok(i) = idx.parse::<usize>() {
            if i >= MAX_OPERANDS {
                return Err(AsmError::OperandRegisterOutOfRange { line, token: tok.to_string() });
            }
            return Ok(Token::Reg(Reg::Operand(i as u8)));
        }
    }
    if let Some(idx) = tok.strip_prefix('X') {
        if let Ok(i) = idx.parse::<usize>() {
            if i >= NUM_GPRS {
                return Err(AsmError::RegisterOutOfRange { line, token: tok.to_string() });
            }
            return Ok(Token::Reg(Reg::Gpr(i as u8)));
        }
    }
    if let Some(s) = Special::from_name(tok) {
        return Ok(Token::Reg(Reg::Special(s)));
    }
    if let Some(name) = tok.strip_prefix('@') {
        if !is_ident(name) {
            return Err(AsmError::Syntax { line, col, msg: format!("bad event label `{tok}`") });
        }
        return Ok(Token::EventRef(name.to_string()));
    }
    if tok.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
        return parse_int(tok)
            .map(Token::Imm)
            .ok_or_else(|| AsmError::Syntax { line, col, msg: format!("bad immediate `{tok}`") });
    }
    if is_ident(tok) {
        return Ok(Token::Ident(tok.to_string()));
    }
    Err(AsmError::Syntax { line, col, msg: format!("unexpected token `{tok}`") })
}

fn parse_instruction(text: &str, line: usize, base_col: usize) -> Result<PendingInstr, AsmError> {
    let text = text.trim_end();
    let (mnemonic, rest) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], &text[i..]),
        None => (text, ""),
    };
    let op = Opcode::from_mnemonic(mnemonic)
        .ok_or_else(|| AsmError::UnknownMnemonic { line, mnemonic: mnemonic.to_string() })?;
    let mut tokens = Vec::new();
    if !rest.trim().is_empty() {
        let mut col = base_col + mnemonic.len();
        for piece in rest.split(',') {
            let tok = piece.trim();
            let lead = piece.len() - piece.trim_start().len();
            if tok.is_empty() {
                return Err(AsmError::Syntax { line, col: col + lead + 1, msg: "empty operand".into() });
            }
            tokens.push((parse_token(tok, line, col + lead + 1)?, col + lead + 1));
            col += piece.len() + 1;
        }
    }
    let expected = op.signature().len();
    if tokens.len() != expected {
        return Err(AsmError::Arity { line, mnemonic: mnemonic.to_string(), expected, found: tokens.len() });
    }
    Ok(PendingInstr { op, tokens, line })
}

/// Assembles program text into a validated [`ProgramImage`].
///
/// Numeric event ids follow the order of the `.event` declarations, so identical
/// source always yields an identical image.
pub fn assemble(source: &str) -> Result<ProgramImage, AsmError> {
    let mut events: Vec<(String, usize)> = Vec::new();
    let mut handlers: Vec<PendingHandler> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = strip_comment(raw);
        let trimmed = text.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col0 = text.len() - text.trim_start().len() + 1;

        if let Some(list) = trimmed.strip_prefix(".event") {
            if !list.is_empty() && !list.starts_with(char::is_whitespace) {
                return Err(AsmError::Syntax { line, col: col0, msg: format!("unknown directive `{trimmed}`") });
            }
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                if !is_ident(name) {
                    return Err(AsmError::Syntax { line, col: col0, msg: format!("bad event name `{name}`") });
                }
                if events.iter().any(|(n, _)| n == name) {
                    return Err(AsmError::Label { line, msg: format!("event `{name}` declared twice") });
                }
                events.push((name.to_string(), line));
            }
            continue;
        }
        if trimmed.starts_with('.') {
            return Err(AsmError::Syntax { line, col: col0, msg: format!("unknown directive `{trimmed}`") });
        }

        let mut rest = trimmed;
        let mut rest_col = col0;
        if let Some(colon) = trimmed.find(':') {
            let name = trimmed[..colon].trim();
            if is_ident(name) {
                if events.iter().any(|(n, _)| n == name) {
                    if handlers.iter().any(|h| h.label == name) {
                        return Err(AsmError::Label { line, msg: format!("handler `{name}` defined twice") });
                    }
                    handlers.push(PendingHandler {
                        label: name.to_string(),
                        line,
                        body: Vec::new(),
                        code_labels: BTreeMap::new(),
                    });
                } else if name.starts_with('L') {
                    let handler = handlers.last_mut().ok_or_else(|| AsmError::Syntax {
                        line,
                        col: col0,
                        msg: format!("code label `{name}` outside a handler"),
                    })?;
                    if handler.code_labels.insert(name.to_string(), handler.body.len()).is_some() {
                        return Err(AsmError::Label {
                            line,
                            msg: format!("code label `{name}` defined twice in `{}`", handler.label),
                        });
                    }
                } else {
                    return Err(AsmError::Label {
                        line,
                        msg: format!("`{name}` is neither a declared event nor an L-prefixed code label"),
                    });
                }
                rest = trimmed[colon + 1..].trim();
                rest_col = col0 + colon + 1;
                if rest.is_empty() {
                    continue;
                }
            }
        }

        let instr = parse_instruction(rest, line, rest_col)?;
        let handler = handlers.last_mut().ok_or_else(|| AsmError::Syntax {
            line,
            col: col0,
            msg: "instruction outside a handler".into(),
        })?;
        handler.body.push(instr);
    }

    let label_table: BTreeMap<String, u16> =
        events.iter().enumerate().map(|(i, (n, _))| (n.clone(), i as u16)).collect();
    for (name, line) in &events {
        if !handlers.iter().any(|h| &h.label == name) {
            return Err(AsmError::UnresolvedLabel { line: *line, label: name.clone() });
        }
    }
    handlers.sort_by_key(|h| label_table[&h.label]);

    let mut code = Vec::new();
    let mut source_map = Vec::new();
    let mut out_handlers = Vec::with_capacity(handlers.len());
    for h in &handlers {
        let entry = code.len();
        for p in &h.body {
            code.push(resolve(p, h, &label_table)?);
            source_map.push(p.line);
        }
        out_handlers.push(EventHandler { label: h.label.clone(), id: label_table[&h.label], entry, len: h.body.len() });
    }

    let image = ProgramImage { handlers: out_handlers, code, label_table, source_map };
    if let Some(d) = validate(&image).into_iter().next() {
        let line = d.instruction.and_then(|i| image.source_map.get(i).copied()).unwrap_or_else(|| {
            handlers.iter().find(|h| h.label == d.handler).map(|h| h.line).unwrap_or(0)
        });
        return Err(match d.rule {
            super::validate::Rule::FallThrough => AsmError::MissingYield { line, handler: d.handler },
            _ => AsmError::Invalid { line, msg: d.to_string() },
        });
    }
    Ok(image)
}

fn resolve(p: &PendingInstr, h: &PendingHandler, labels: &BTreeMap<String, u16>) -> Result<Instruction, AsmError> {
    let mnemonic = p.op.mnemonic();
    let mut operands = Vec::with_capacity(p.tokens.len());
    for (index, ((tok, _col), slot)) in p.tokens.iter().zip(p.op.signature()).enumerate() {
        let kind_err = |msg: &str| AsmError::OperandKind {
            line: p.line,
            mnemonic: mnemonic.to_string(),
            index,
            msg: msg.to_string(),
        };
        let operand = match (slot, tok) {
            (Slot::Dst, Token::Reg(r @ Reg::Gpr(_))) | (Slot::Window, Token::Reg(r @ Reg::Gpr(_))) => Operand::Reg(*r),
            (Slot::Dst, Token::Reg(_)) => return Err(kind_err("destination must be a GPR (X0..X15)")),
            (Slot::Window, Token::Reg(_)) => return Err(kind_err("register window must start at a GPR")),
            (Slot::Src, Token::Reg(r)) => Operand::Reg(*r),
            (Slot::Imm, Token::Imm(v)) => Operand::Imm(*v),
            (Slot::Code, Token::Ident(name)) => match h.code_labels.get(name) {
                Some(&target) => Operand::Code { name: name.clone(), target },
                None => return Err(AsmError::UnresolvedLabel { line: p.line, label: name.clone() }),
            },
            (Slot::Event, Token::EventRef(name)) => match labels.get(name) {
                Some(&id) => Operand::Event { name: name.clone(), id },
                None => return Err(AsmError::UnresolvedLabel { line: p.line, label: format!("@{name}") }),
            },
            (Slot::New, Token::Ident(s)) if s == "NEW" => Operand::New,
            (Slot::Mode, Token::Ident(s)) if s == "R" => Operand::Mode(MemKind::Read),
            (Slot::Mode, Token::Ident(s)) if s == "W" => Operand::Mode(MemKind::Write),
            (Slot::Dst | Slot::Src | Slot::Window, _) => return Err(kind_err("expected a register")),
            (Slot::Imm, _) => return Err(kind_err("expected an immediate")),
            (Slot::Code, _) => return Err(kind_err("expected a code label")),
            (Slot::Event, _) => return Err(kind_err("expected an @event label")),
            (Slot::New, _) => return Err(kind_err("expected NEW")),
            (Slot::Mode, _) => return Err(kind_err("expected R or W")),
        };
        operands.push(operand);
    }
    Ok(Instruction::new(p.op, operands))
}
