//! Placement of a graph in DRAM.
//!
//! Vertex `v`'s attributes sit at `attr_base + 32*v` as `(degree, id, list pointer, 0)`;
//! the 4-word stride keeps every attribute read inside one 64-byte line. Each neighbor
//! list starts on a 64-byte boundary and is padded to a whole number of lines with
//! [`PAD`], so a kernel may always fetch full 8-word segments.

use thiserror::Error;

use super::graph::Graph;
use crate::memory::{DramImage, MemError, LINE_BYTES};

pub const ATTR_STRIDE: u64 = 32;
pub const PAD: u64 = i64::MAX as u64;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("layout needs {need:#x} bytes but the address space holds {have:#x}")]
    Overflow { need: u64, have: u64 },
    #[error(transparent)]
    Mem(#[from] MemError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    pub attr_base: u64,
    pub nl_base: u64,
    /// Neighbor list start of each vertex.
    pub nl_ptr: Vec<u64>,
    pub nl_end: u64,
    pub result_base: u64,
    /// First byte of kernel-specific auxiliary space.
    pub aux_base: u64,
    pub aux_bytes: u64,
    pub end: u64,
}

fn align(x: u64) -> u64 {
    x.div_ceil(LINE_BYTES) * LINE_BYTES
}

impl LayoutPlan {
    /// Lays out `g` from address 0 with `aux_bytes` of auxiliary space after the result line.
    pub fn new(g: &Graph, aux_bytes: u64) -> LayoutPlan {
        let attr_base = 0;
        let nl_base = align(attr_base + ATTR_STRIDE * g.n() as u64);
        let mut nl_ptr = Vec::with_capacity(g.n());
        let mut at = nl_base;
        for v in 0..g.n() {
            nl_ptr.push(at);
            at += align(8 * g.degree(v) as u64);
        }
        let nl_end = at;
        let result_base = nl_end;
        let aux_base = result_base + LINE_BYTES;
        let end = align(aux_base + aux_bytes);
        LayoutPlan { attr_base, nl_base, nl_ptr, nl_end, result_base, aux_base, aux_bytes, end }
    }

    pub fn attr_addr(&self, v: usize) -> u64 {
        self.attr_base + ATTR_STRIDE * v as u64
    }

    /// Neighbor words actually stored, padding excluded.
    pub fn nl_words(g: &Graph) -> usize {
        g.neighbors.len()
    }
}

/// Writes attributes and padded neighbor lists into `dram`.
pub fn layout_graph(g: &Graph, plan: &LayoutPlan, dram: &mut DramImage) -> Result<(), LayoutError> {
    if plan.end > dram.size() {
        return Err(LayoutError::Overflow { need: plan.end, have: dram.size() });
    }
    for v in 0..g.n() {
        dram.write_words(plan.attr_addr(v), &[g.degree(v) as u64, v as u64, plan.nl_ptr[v], 0])?;
        let mut list = g.adj(v).to_vec();
        list.resize(list.len().div_ceil(8) * 8, PAD);
        dram.write_words(plan.nl_ptr[v], &list)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k3_layout() {
        let g = Graph::complete(3);
        let plan = LayoutPlan::new(&g, 0);
        assert_eq!(LayoutPlan::nl_words(&g), 6);
        assert_eq!(plan.nl_base, 128);
        let mut dram = DramImage::new(plan.end);
        layout_graph(&g, &plan, &mut dram).unwrap();
        assert_eq!(dram.read_words(plan.attr_addr(1), 3).unwrap(), vec![2, 1, plan.nl_ptr[1]]);
        assert_eq!(dram.read_words(plan.nl_ptr[1], 3).unwrap(), vec![0, 2, PAD]);
        let again = {
            let mut d = dram.clone();
            layout_graph(&g, &plan, &mut d).unwrap();
            d
        };
        assert_eq!(again, dram);
    }

    #[test]
    fn zero_degree_vertex() {
        let g = Graph::from_edges(3, [(0, 2)]);
        let plan = LayoutPlan::new(&g, 0);
        assert_eq!(plan.nl_ptr[1], plan.nl_ptr[2]);
        let mut dram = DramImage::new(plan.end);
        layout_graph(&g, &plan, &mut dram).unwrap();
        assert_eq!(dram.read_words(plan.attr_addr(1), 3).unwrap(), vec![0, 1, plan.nl_ptr[1]]);
    }

    #[test]
    fn overflow_is_reported() {
        let g = Graph::complete(20);
        let plan = LayoutPlan::new(&g, 0);
        let mut dram = DramImage::new(256);
        assert!(matches!(layout_graph(&g, &plan, &mut dram), Err(LayoutError::Overflow { .. })));
    }
}
