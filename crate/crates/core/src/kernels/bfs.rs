use std::collections::BTreeMap;

use super::oracle::INF;
use super::{check_shape, finish, fragments, layout_graph, render, with_event_list, Graph, Kernel, KernelBundle, KernelError, LayoutPlan};
use crate::fabric::{host_event, NodeConfig, ResultRegion};
use crate::memory::{DramImage, LINE_BYTES};

const SOURCE: &str = include_str!("asm/bfs.s");
const FRAGMENTS: &str = include_str!("asm/bfs_fragments.s");

/// Scratch byte address of each lane's visitation table.
const VIS: u64 = 0x100;
/// Thread buffers start here; the visitation table must end below it.
const BUFFERS: u64 = 0x8000;

/// Breadth-first search from `source`. The result is the distance array, `INF` for
/// unreachable vertices.
pub fn build_bfs(g: &Graph, source: usize, cfg: &NodeConfig) -> Result<KernelBundle, KernelError> {
    check_shape(cfg)?;
    let n = g.n();
    if source >= n {
        return Err(KernelError::Param(format!("source {source} is not a vertex (n = {n})")));
    }
    let lanes = cfg.total_lanes();
    let owned = n.div_ceil(lanes).max(8).next_power_of_two() as u64;
    if VIS + 8 * owned > BUFFERS {
        return Err(KernelError::Param(format!("{owned} vertices per lane do not fit the visitation table")));
    }
    let dist_bytes = (8 * n as u64).div_ceil(LINE_BYTES) * LINE_BYTES;
    let frontier_bytes = 2 * lanes as u64 * owned * 8;
    let plan = LayoutPlan::new(g, dist_bytes + frontier_bytes);
    let dist = plan.aux_base;
    let fr = dist + dist_bytes;
    let mut dram = DramImage::new(plan.end);
    layout_graph(g, &plan, &mut dram)?;
    let mut init = vec![INF; n];
    init[source] = 0;
    dram.write_words(dist, &init).map_err(super::LayoutError::from)?;
    let owner = source & (lanes - 1);
    dram.write_words(fr + owner as u64 * owned * 8, &[source as u64]).map_err(super::LayoutError::from)?;

    let mut vars: BTreeMap<String, String> = fragments(FRAGMENTS);
    vars.insert("L".into(), lanes.to_string());
    vars.insert("LM1".into(), (lanes - 1).to_string());
    vars.insert("LOGL".into(), lanes.trailing_zeros().to_string());
    vars.insert("CAPSHIFT".into(), (owned * 8).trailing_zeros().to_string());
    vars.insert("FR".into(), fr.to_string());
    vars.insert("DIST".into(), dist.to_string());
    vars.insert("ATTR".into(), plan.attr_base.to_string());
    vars.insert("VIS".into(), VIS.to_string());
    let (source_text, program) = finish(render(&with_event_list(SOURCE), &vars)?)?;
    let boot = vec![host_event(&program, 0, "bfs_master", &[]).expect("bfs_master exists")];
    let local = (source >> lanes.trailing_zeros()) as u64;
    Ok(KernelBundle {
        kernel: Kernel::Bfs,
        source: source_text,
        program,
        result: vec![ResultRegion::Dram { addr: dist, words: n }],
        plan,
        dram,
        boot,
        scratch_init: vec![(owner as u32, 16, 1), (owner as u32, VIS + 8 * local, 1)],
        accelerators: cfg.accelerators,
        lanes_per_accelerator: cfg.lanes_per_accelerator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Halt;
    use crate::kernels::{oracle_bfs, Output};

    fn distances(g: &Graph, src: usize, a: usize, l: usize) -> Vec<u64> {
        let cfg = NodeConfig::with_shape(a, l);
        let run = build_bfs(g, src, &cfg).unwrap().simulate(&cfg).unwrap();
        assert_eq!(run.result.halted, Halt::Quiescent, "{:?}", run.result.fault);
        match run.output {
            Output::Distances(d) => d,
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn fixtures() {
        assert_eq!(distances(&Graph::star(4), 0, 1, 4), vec![0, 1, 1, 1, 1]);
        assert_eq!(distances(&Graph::path(5), 0, 2, 2), vec![0, 1, 2, 3, 4]);
        assert_eq!(distances(&Graph::path(2), 0, 1, 1), vec![0, 1]);
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]);
        assert_eq!(distances(&g, 1, 1, 2), vec![1, 0, INF, INF]);
    }

    #[test]
    fn random_matches_oracle() {
        let g = Graph::random(300, 1000, 5);
        for (a, l) in [(1, 1), (1, 8), (2, 4)] {
            assert_eq!(distances(&g, 7, a, l), oracle_bfs(&g, 7), "{a}x{l}");
        }
    }

    #[test]
    fn bad_source() {
        let cfg = NodeConfig::with_shape(1, 2);
        assert!(matches!(build_bfs(&Graph::path(3), 3, &cfg), Err(KernelError::Param(_))));
    }
}
