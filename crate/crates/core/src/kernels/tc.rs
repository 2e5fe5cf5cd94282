use std::collections::BTreeMap;

use super::{check_shape, finish, fragments, layout_graph, render, with_event_list, Graph, Kernel, KernelBundle, KernelError, LayoutPlan};
use crate::fabric::{host_event, NodeConfig, ResultRegion};
use crate::memory::DramImage;

const COMMON: &str = include_str!("asm/tc_common.s");
const FINE: &str = include_str!("asm/tc_fine.s");
const COARSE: &str = include_str!("asm/tc_coarse.s");
const FRAGMENTS: &str = include_str!("asm/tc_fragments.s");

/// Bytes of the longer list handled by one intersect or chunk thread.
pub const CHUNK_BYTES: u64 = 512;
/// Completion credit carried by each intersect thread; every chunk thread takes one unit.
const CREDIT: u64 = 1 << 20;

/// Renders the TC program for a node of `lanes` lanes.
pub fn tc_source(n: usize, lanes: usize, attr: u64, result: u64, coarse: bool) -> Result<String, KernelError> {
    let mut vars: BTreeMap<String, String> = fragments(FRAGMENTS);
    let finish_key = if coarse { "COARSE_FINISH" } else { "FINE_FINISH" };
    vars.insert("FINISH".into(), vars[finish_key].clone());
    vars.insert("LM1".into(), (lanes - 1).to_string());
    vars.insert("CREDIT".into(), CREDIT.to_string());
    vars.insert("CHUNK".into(), CHUNK_BYTES.to_string());
    vars.insert("CHUNK_M1".into(), (CHUNK_BYTES - 1).to_string());
    vars.insert("CHUNK_SHIFT".into(), CHUNK_BYTES.trailing_zeros().to_string());
    vars.insert("N".into(), n.to_string());
    vars.insert("L".into(), lanes.to_string());
    vars.insert("ATTR".into(), attr.to_string());
    vars.insert("RESULT".into(), result.to_string());
    let body = format!("{COMMON}\n{}", if coarse { COARSE } else { FINE });
    render(&with_event_list(&body), &vars)
}

/// Triangle counting. `coarse` selects the variant without intersect threads.
pub fn build_tc(g: &Graph, cfg: &NodeConfig, coarse: bool) -> Result<KernelBundle, KernelError> {
    check_shape(cfg)?;
    if (8 * g.max_degree() as u64) / CHUNK_BYTES >= CREDIT {
        return Err(KernelError::Param("neighbor list too long to split into chunks".into()));
    }
    let plan = LayoutPlan::new(g, 0);
    let mut dram = DramImage::new(plan.end);
    layout_graph(g, &plan, &mut dram)?;
    let src = tc_source(g.n(), cfg.total_lanes(), plan.attr_base, plan.result_base, coarse)?;
    let (source, program) = finish(src)?;
    let boot = vec![host_event(&program, 0, "tc_master", &[]).expect("tc_master exists")];
    Ok(KernelBundle {
        kernel: if coarse { Kernel::TcCoarse } else { Kernel::Tc },
        source,
        program,
        result: vec![ResultRegion::Dram { addr: plan.result_base, words: 1 }],
        plan,
        dram,
        boot,
        scratch_init: Vec::new(),
        accelerators: cfg.accelerators,
        lanes_per_accelerator: cfg.lanes_per_accelerator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Halt;
    use crate::kernels::Output;

    fn count(g: &Graph, a: usize, l: usize, coarse: bool) -> u64 {
        let cfg = NodeConfig::with_shape(a, l);
        let run = build_tc(g, &cfg, coarse).unwrap().simulate(&cfg).unwrap();
        assert_eq!(run.result.halted, Halt::Quiescent, "{:?}", run.result.fault);
        match run.output {
            Output::Triangles(t) => t,
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn fixtures() {
        for coarse in [false, true] {
            assert_eq!(count(&Graph::complete(3), 1, 4, coarse), 1);
            assert_eq!(count(&Graph::complete(4), 1, 4, coarse), 4);
            assert_eq!(count(&Graph::path(4), 2, 2, coarse), 0);
            assert_eq!(count(&Graph::complete(12), 2, 4, coarse), 220);
        }
    }
}
