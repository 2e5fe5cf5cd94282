use std::collections::BTreeMap;

use super::{check_shape, finish, fragments, layout_graph, render, with_event_list, Graph, Kernel, KernelBundle, KernelError, LayoutPlan};
use crate::fabric::{host_event, NodeConfig, ResultRegion};
use crate::stats::SimStats;
use crate::memory::DramImage;

const SOURCE: &str = include_str!("asm/js.s");
const FRAGMENTS: &str = include_str!("asm/js_fragments.s");

/// Scratch byte address of the neighbor list cache. The skip area follows it.
const CACHE: u64 = 0x100;
const BUFFERS: u64 = 0x8000;

/// Largest `cache_words` that fits; the cache and its skip area share the space
/// below the thread buffers.
pub const MAX_CACHE_WORDS: usize = ((BUFFERS - CACHE) / 16 / 8 * 8) as usize;

/// Jaccard similarity for every pair `u < v`, written to a row-major `n x n` matrix.
/// Lists longer than `cache_words` are streamed from DRAM instead of cached.
pub fn build_js(g: &Graph, cache_words: usize, cfg: &NodeConfig) -> Result<KernelBundle, KernelError> {
    check_shape(cfg)?;
    let cap = cache_words.div_ceil(8) * 8;
    if cap > MAX_CACHE_WORDS {
        return Err(KernelError::Param(format!("cache of {cache_words} words exceeds {MAX_CACHE_WORDS}")));
    }
    let n = g.n();
    let lanes = cfg.total_lanes();
    let plan = LayoutPlan::new(g, (8 * n * n).max(8) as u64);
    let result = plan.aux_base;
    let mut dram = DramImage::new(plan.end);
    layout_graph(g, &plan, &mut dram)?;

    let row = 8 * n as u64;
    let mut vars: BTreeMap<String, String> = fragments(FRAGMENTS);
    vars.insert("L".into(), lanes.to_string());
    vars.insert("N".into(), n.to_string());
    vars.insert("NM1".into(), n.saturating_sub(1).to_string());
    vars.insert("ROWSTEP".into(), (lanes as u64 * row).to_string());
    vars.insert("CAP".into(), cap.to_string());
    vars.insert("CACHE".into(), CACHE.to_string());
    vars.insert("JUNK".into(), (CACHE + 8 * cap as u64).to_string());
    vars.insert("ATTR".into(), plan.attr_base.to_string());
    vars.insert("RESULT".into(), result.to_string());
    let (source, program) = finish(render(&with_event_list(SOURCE), &vars)?)?;
    let boot = vec![host_event(&program, 0, "js_master", &[]).expect("js_master exists")];
    let scratch_init = (0..lanes.min(n)).map(|l| (l as u32, 48, l as u64 * row)).collect();
    Ok(KernelBundle {
        kernel: Kernel::Js,
        source,
        program,
        result: vec![ResultRegion::Dram { addr: result, words: n * n }],
        plan,
        dram,
        boot,
        scratch_init,
        accelerators: cfg.accelerators,
        lanes_per_accelerator: cfg.lanes_per_accelerator,
    })
}

/// Pairs that streamed both lists because the row's list did not fit the cache.
pub fn streamed_pairs(stats: &SimStats) -> u64 {
    stats.label_invocations.get("js_spair").copied().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Halt;
    use crate::kernels::{oracle, KernelParams, KernelRun};

    fn run(g: &Graph, cache: usize, a: usize, l: usize) -> KernelRun {
        let cfg = NodeConfig::with_shape(a, l);
        let run = build_js(g, cache, &cfg).unwrap().simulate(&cfg).unwrap();
        assert_eq!(run.result.halted, Halt::Quiescent, "{:?}", run.result.fault);
        run.output.check(&oracle(Kernel::Js, g, &KernelParams::default())).unwrap();
        run
    }

    #[test]
    fn fixtures() {
        run(&Graph::complete(5), 1024, 1, 2);
        run(&Graph::path(4), 1024, 1, 4);
        run(&Graph::from_edges(3, []), 1024, 1, 1);
        run(&Graph::from_edges(1, []), 1024, 1, 2);
    }

    #[test]
    fn random_matches_oracle() {
        let g = Graph::random(120, 600, 3);
        for (a, l) in [(1, 1), (1, 8), (2, 4)] {
            let r = run(&g, 1024, a, l);
            assert_eq!(streamed_pairs(&r.result.stats), 0);
        }
    }

    #[test]
    fn long_lists_stream() {
        let g = Graph::power_law(100, 600, 2.5, 2);
        let r = run(&g, 8, 1, 4);
        assert!(streamed_pairs(&r.result.stats) > 0);
        assert!(MAX_CACHE_WORDS >= 1024);
        assert!(build_js(&g, MAX_CACHE_WORDS + 1, &NodeConfig::with_shape(1, 4)).is_err());
    }
}
