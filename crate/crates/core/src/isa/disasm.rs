use std::collections::BTreeMap;
use std::fmt::Write;

use super::{Operand, ProgramImage};

/// Renders an image back to assembly text that re-assembles to a structurally equal image.
///
/// Code labels are emitted only where some branch refers to them.
pub fn disassemble(image: &ProgramImage) -> String {
    let mut out = String::new();
    let names: Vec<&str> = image.handlers.iter().map(|h| h.label.as_str()).collect();
    for chunk in names.chunks(8) {
        writeln!(out, ".event {}", chunk.join(", ")).unwrap();
    }
    for h in &image.handlers {
        out.push('\n');
        writeln!(out, "{}:", h.label).unwrap();
        let body = image.body(h);
        let mut labels: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for ins in body {
            for op in &ins.operands {
                if let Operand::Code { name, target } = op {
                    let at = labels.entry(*target).or_default();
                    if !at.contains(&name.as_str()) {
                        at.push(name);
                    }
                }
            }
        }
        for (i, ins) in body.iter().enumerate() {
            if let Some(ls) = labels.get(&i) {
                for l in ls {
                    writeln!(out, "{l}:").unwrap();
                }
            }
            writeln!(out, "    {ins}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    #[test]
    fn minimal_has_one_handler_block() {
        let img = assemble(".event ev_noop\nev_noop:\n  yieldt\n").unwrap();
        let text = disassemble(&img);
        assert_eq!(text.matches("ev_noop:").count(), 1);
        assert!(text.contains("yieldt"));
        assert!(assemble(&text).unwrap().structurally_eq(&img));
    }

    #[test]
    fn labels_and_events_survive() {
        let src = ".event a, b\na:\n  evii X1, 3, NEW, @b\nLtop:\n  send X1, X2, 2\n  subi X2, X2, 1\n  bgt X2, ZERO, Ltop\n  yield\nb:\n  yieldt\n";
        let img = assemble(src).unwrap();
        let again = assemble(&disassemble(&img)).unwrap();
        assert!(again.structurally_eq(&img));
    }
}
