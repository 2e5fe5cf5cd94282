use std::thread;

use thiserror::Error;

use super::ablation::{apply_ablation, attribute, AblationConfig};
use crate::fabric::{Halt, NodeConfig};
use crate::kernels::{build, Graph, Kernel, KernelError, KernelParams, KernelRun, Output};
use crate::stats::SimStats;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{config} run did not finish: {detail}")]
    Fault { config: AblationConfig, detail: String },
    #[error("{config} produced a different result than PE")]
    Diverged { config: AblationConfig },
}

#[derive(Debug, Clone)]
pub struct LadderRow {
    pub config: AblationConfig,
    pub cycles: u64,
    pub speedup_vs_pe: f64,
    /// Share of the total log-speedup gained by stepping to this point; 0 for PE.
    pub fraction: f64,
    pub stats: SimStats,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub kernel: Kernel,
    pub rows: Vec<LadderRow>,
    pub output: Output,
}

impl AblationTable {
    pub fn cycles(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.cycles).collect()
    }

    pub fn strictly_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].cycles > w[1].cycles)
    }

    pub fn total_speedup(&self) -> f64 {
        self.rows.last().map_or(1.0, |r| r.speedup_vs_pe)
    }
}

/// Runs `kernel` once and requires a quiescent finish.
pub fn run_once(kernel: Kernel, g: &Graph, params: &KernelParams, node: &NodeConfig) -> Result<KernelRun, SuiteError> {
    let run = build(kernel, g, params, node)?.simulate(node)?;
    if run.result.halted != Halt::Quiescent {
        let config = AblationConfig::from_flags(node.mechanisms.som, node.mechanisms.lwt, node.mechanisms.ust, node.mechanisms.eds)
            .unwrap_or(AblationConfig::Full);
        let detail = match &run.result.fault {
            Some(f) => f.to_string(),
            None => format!("{:?} at cycle {}", run.result.halted, run.result.final_cycle),
        };
        return Err(SuiteError::Fault { config, detail });
    }
    Ok(run)
}

/// Runs the five ladder points in parallel and attributes the speedup between them.
pub fn run_ablation_suite(kernel: Kernel, g: &Graph, params: &KernelParams, node: &NodeConfig) -> Result<AblationTable, SuiteError> {
    let bundle = build(kernel, g, params, node)?;
    let results: Vec<Result<(u64, SimStats, Output), SuiteError>> = thread::scope(|s| {
        let handles: Vec<_> = AblationConfig::LADDER
            .iter()
            .map(|&config| {
                let bundle = &bundle;
                s.spawn(move || {
                    let cfg = apply_ablation(config, node);
                    let run = bundle.simulate(&cfg)?;
                    if run.result.halted != Halt::Quiescent {
                        let detail = match &run.result.fault {
                            Some(f) => f.to_string(),
                            None => format!("{:?} at cycle {}", run.result.halted, run.result.final_cycle),
                        };
                        return Err(SuiteError::Fault { config, detail });
                    }
                    Ok((run.result.final_cycle, run.result.stats, run.output))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ladder run panicked")).collect()
    });
    let mut runs = Vec::new();
    for r in results {
        runs.push(r?);
    }
    let cycles: Vec<u64> = runs.iter().map(|r| r.0).collect();
    let fractions = attribute(&cycles);
    let pe = cycles[0] as f64;
    let output = runs[0].2.clone();
    let mut rows = Vec::new();
    for (i, (config, (c, stats, out))) in AblationConfig::LADDER.into_iter().zip(runs).enumerate() {
        // Rank sums are reassociated by timing, so PR agrees to the oracle tolerance only.
        if out.check(&output).is_err() {
            return Err(SuiteError::Diverged { config });
        }
        let fraction = if i == 0 { 0.0 } else { fractions[i - 1] };
        rows.push(LadderRow { config, cycles: c, speedup_vs_pe: pe / c as f64, fraction, stats });
    }
    Ok(AblationTable { kernel, rows, output })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_on_every_kernel() {
        let g = Graph::random(60, 240, 5);
        let node = NodeConfig::with_shape(1, 4);
        for kernel in Kernel::ALL {
            let params = KernelParams { iters: 3, ..KernelParams::default() };
            let t = run_ablation_suite(kernel, &g, &params, &node).unwrap_or_else(|e| panic!("{kernel:?}: {e}"));
            assert!(t.strictly_monotone(), "{kernel:?}: {:?}", t.cycles());
            let sum: f64 = t.rows.iter().map(|r| r.fraction).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
