use std::collections::BTreeMap;

use super::{check_shape, finish, fragments, layout_graph, render, with_event_list, Graph, Kernel, KernelBundle, KernelError, LayoutPlan};
use crate::fabric::{host_event, NodeConfig, ResultRegion};
use crate::memory::DramImage;

const SOURCE: &str = include_str!("asm/pr.s");
const FRAGMENTS: &str = include_str!("asm/pr_fragments.s");

/// Scratch byte address of the accumulators.
const ACC: u64 = 0x100;
const BUFFERS: u64 = 0x8000;

/// PageRank with damping `d`, run for exactly `iters` iterations from uniform ranks.
pub fn build_pr(g: &Graph, d: f64, iters: usize, cfg: &NodeConfig) -> Result<KernelBundle, KernelError> {
    check_shape(cfg)?;
    if iters == 0 {
        return Err(KernelError::Param("PageRank needs at least one iteration".into()));
    }
    let n = g.n();
    let lanes = cfg.total_lanes();
    let owned = n.div_ceil(lanes).max(1).next_power_of_two() as u64;
    if ACC + 2 * 8 * owned > BUFFERS {
        return Err(KernelError::Param(format!("{owned} vertices per lane do not fit the accumulators")));
    }
    // One rank buffer per parity, each a power of two bytes so the parity is an address bit.
    let nb = (8 * n as u64).max(64).next_power_of_two();
    let plan = LayoutPlan::new(g, 2 * nb);
    let rank = plan.aux_base.div_ceil(nb) * nb;
    let plan = LayoutPlan::new(g, rank - plan.aux_base + 2 * nb);
    let mut dram = DramImage::new(plan.end);
    layout_graph(g, &plan, &mut dram)?;
    let uniform = (1.0 / n as f64).to_bits();
    dram.write_words(rank, &vec![uniform; n]).map_err(super::LayoutError::from)?;

    let mut vars: BTreeMap<String, String> = fragments(FRAGMENTS);
    vars.insert("L".into(), lanes.to_string());
    vars.insert("L8".into(), (8 * lanes).to_string());
    vars.insert("LM1".into(), (lanes - 1).to_string());
    vars.insert("LOGL".into(), lanes.trailing_zeros().to_string());
    vars.insert("OWNSHIFT".into(), (8 * owned).trailing_zeros().to_string());
    vars.insert("NBSHIFT".into(), nb.trailing_zeros().to_string());
    vars.insert("NBM1".into(), (nb - 1).to_string());
    vars.insert("RANK".into(), rank.to_string());
    vars.insert("ATTR".into(), plan.attr_base.to_string());
    vars.insert("ACC".into(), ACC.to_string());
    vars.insert("ITERS".into(), iters.to_string());
    vars.insert("BASE".into(), ((1.0 - d) / n as f64).to_bits().to_string());
    vars.insert("DAMP".into(), d.to_bits().to_string());
    let (source, program) = finish(render(&with_event_list(SOURCE), &vars)?)?;
    let boot = vec![host_event(&program, 0, "pr_master", &[]).expect("pr_master exists")];

    let mut scratch_init = Vec::new();
    for lane in 0..lanes.min(n) {
        let mine = (lane..n).step_by(lanes);
        let inflow: usize = mine.clone().map(|v| g.degree(v)).sum();
        scratch_init.push((lane as u32, 8, inflow as u64));
        scratch_init.push((lane as u32, 16, mine.count() as u64));
    }
    Ok(KernelBundle {
        kernel: Kernel::Pr,
        source,
        program,
        result: vec![ResultRegion::Dram { addr: rank + (iters as u64 % 2) * nb, words: n }],
        plan,
        dram,
        boot,
        scratch_init,
        accelerators: cfg.accelerators,
        lanes_per_accelerator: cfg.lanes_per_accelerator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Halt;
    use crate::kernels::{oracle_pr, Output};

    fn ranks(g: &Graph, iters: usize, a: usize, l: usize) -> Output {
        let cfg = NodeConfig::with_shape(a, l);
        let run = build_pr(g, 0.85, iters, &cfg).unwrap().simulate(&cfg).unwrap();
        assert_eq!(run.result.halted, Halt::Quiescent, "{:?}", run.result.fault);
        run.output
    }

    #[test]
    fn fixtures() {
        assert_eq!(ranks(&Graph::ring(4), 3, 1, 2), Output::Ranks(vec![0.25; 4]));
        let single = Graph::from_edges(1, []);
        ranks(&single, 2, 1, 2).check(&Output::Ranks(vec![0.15])).unwrap();
        let chain = Graph::path(3);
        ranks(&chain, 10, 1, 4).check(&Output::Ranks(oracle_pr(&chain, 0.85, 10))).unwrap();
    }

    #[test]
    fn random_matches_oracle() {
        let g = Graph::random(200, 800, 9);
        let want = Output::Ranks(oracle_pr(&g, 0.85, 6));
        for (a, l) in [(1, 1), (1, 8), (2, 4)] {
            ranks(&g, 6, a, l).check(&want).unwrap();
        }
    }
}
