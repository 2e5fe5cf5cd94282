//! CSV and summary output. Floats are printed with fixed precision so identical runs
//! give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::bench::RampRow;
use super::suite::AblationTable;
use crate::kernels::{Kernel, Output};
use crate::stats::SimStats;

/// `lane,busy_cycles,utilization`
pub fn lanes_csv(s: &SimStats) -> String {
    let mut out = String::from("lane,busy_cycles,utilization\n");
    for (l, busy) in s.lane_busy_cycles.iter().enumerate() {
        let _ = writeln!(out, "{l},{busy},{:.6}", s.utilization(l));
    }
    out
}

/// One row per histogram bucket: `<key>,invocations`.
pub fn histogram_csv(key: &str, h: &BTreeMap<u64, u64>) -> String {
    let mut out = format!("{key},invocations\n");
    for (k, v) in h {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// `sample,cycle,outstanding`
pub fn outstanding_csv(s: &SimStats) -> String {
    let mut out = String::from("sample,cycle,outstanding\n");
    for (i, v) in s.outstanding_samples.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{v}", i as u64 * s.sample_interval);
    }
    out
}

/// `label,invocations`
pub fn labels_csv(s: &SimStats) -> String {
    let mut out = String::from("label,invocations\n");
    for (k, v) in &s.label_invocations {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// One row per parameter point.
pub fn ramp_csv(rows: &[RampRow]) -> String {
    let mut out =
        String::from("transfer_words,threads,lanes,accelerators,cycles,bandwidth_gbps,steady_gbps,mean_outstanding,mean_latency\n");
    for r in rows {
        let p = r.point;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{:.3},{:.3},{:.3}",
            p.transfer_words, p.threads, p.lanes, p.accelerators, r.cycles, r.bandwidth_gbps, r.steady_gbps, r.mean_outstanding, r.mean_latency
        );
    }
    out
}

/// One row per ladder point.
pub fn ablation_csv(t: &AblationTable) -> String {
    let mut out = String::from("config,cycles,speedup_vs_pe,fraction,instructions,invocations\n");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{},{}",
            r.config, r.cycles, r.speedup_vs_pe, r.fraction, r.stats.instructions, r.stats.invocations
        );
    }
    out
}

/// The result region as raw words: `index,word` with the word in hex.
pub fn result_csv(output: &Output) -> String {
    let words: Vec<u64> = match output {
        Output::Triangles(t) => vec![*t],
        Output::Distances(d) => d.clone(),
        Output::Ranks(r) | Output::Jaccard(r) => r.iter().map(|x| x.to_bits()).collect(),
    };
    let mut out = String::from("index,word\n");
    for (i, w) in words.iter().enumerate() {
        let _ = writeln!(out, "{i},{w:#018x}");
    }
    out
}

/// `key=value` lines describing a kernel run.
pub fn summary(kernel: Kernel, output: &Output, s: &SimStats) -> String {
    let mut out = format!("kernel={}\n", kernel.name());
    match output {
        Output::Triangles(t) => {
            let _ = writeln!(out, "triangles={t}");
        }
        Output::Distances(d) => {
            let reached = d.iter().filter(|&&x| x != crate::kernels::oracle::INF).count();
            let depth = d.iter().filter(|&&x| x != crate::kernels::oracle::INF).max().copied().unwrap_or(0);
            let _ = writeln!(out, "reached={reached}\ndepth={depth}");
        }
        Output::Ranks(r) => {
            let _ = writeln!(out, "rank_sum={:.12}", r.iter().sum::<f64>());
        }
        Output::Jaccard(m) => {
            let _ = writeln!(out, "nonzero_pairs={}", m.iter().filter(|x| **x != 0.0).count());
        }
    }
    out.push_str(&stats_summary(s));
    out
}

pub fn stats_summary(s: &SimStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "cycles={}", s.total_cycles);
    let _ = writeln!(out, "runtime_s={:.9}", s.runtime_seconds());
    let _ = writeln!(out, "threads_created={}", s.threads_created);
    let _ = writeln!(out, "invocations={}", s.invocations);
    let _ = writeln!(out, "instructions={}", s.instructions);
    let _ = writeln!(out, "instructions_per_invocation={:.3}", s.mean_instructions_per_invocation());
    let _ = writeln!(out, "dram_read_bytes={}", s.dram_read_bytes);
    let _ = writeln!(out, "dram_write_bytes={}", s.dram_write_bytes);
    let _ = writeln!(out, "bandwidth_gbps={:.3}", s.bandwidth_gbps());
    let _ = writeln!(out, "mean_outstanding={:.3}", s.mean_outstanding());
    let _ = writeln!(out, "max_outstanding={}", s.max_outstanding);
    let _ = writeln!(out, "utilization_spread={:.6}", s.utilization_spread());
    out
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> io::Result<()> {
    let p = dir.join(name);
    fs::write(&p, body)?;
    written.push(p);
    Ok(())
}

/// Writes the per-run CSVs and `summary.txt` into `dir`, creating it if needed.
pub fn emit_run_report(dir: &Path, kernel: Kernel, output: &Output, s: &SimStats) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut w = Vec::new();
    write(dir, "lanes.csv", &lanes_csv(s), &mut w)?;
    write(dir, "instructions_hist.csv", &histogram_csv("instructions", &s.instr_histogram), &mut w)?;
    write(dir, "memrefs_hist.csv", &histogram_csv("dram_refs", &s.memref_histogram), &mut w)?;
    write(dir, "outstanding.csv", &outstanding_csv(s), &mut w)?;
    write(dir, "labels.csv", &labels_csv(s), &mut w)?;
    write(dir, "result.csv", &result_csv(output), &mut w)?;
    write(dir, "summary.txt", &summary(kernel, output, s), &mut w)?;
    Ok(w)
}

pub fn emit_ramp_report(dir: &Path, rows: &[RampRow]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut w = Vec::new();
    write(dir, "ramp.csv", &ramp_csv(rows), &mut w)?;
    Ok(w)
}

pub fn emit_ablation_report(dir: &Path, t: &AblationTable) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut w = Vec::new();
    write(dir, "ablation.csv", &ablation_csv(t), &mut w)?;
    let mut text = format!("kernel={}\n", t.kernel.name());
    for r in &t.rows {
        let _ = writeln!(text, "{}: cycles={} speedup={:.3} fraction={:.4}", r.config, r.cycles, r.speedup_vs_pe, r.fraction);
    }
    write(dir, "summary.txt", &text, &mut w)?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::NodeConfig;
    use crate::harness::bench::{ramp, RampPoint};
    use crate::harness::run_once;
    use crate::kernels::{Graph, KernelParams};

    #[test]
    fn k3_summary_and_stable_bytes() {
        let cfg = NodeConfig::with_shape(1, 2);
        let a = run_once(Kernel::Tc, &Graph::complete(3), &KernelParams::default(), &cfg).unwrap();
        let b = run_once(Kernel::Tc, &Graph::complete(3), &KernelParams::default(), &cfg).unwrap();
        assert!(summary(Kernel::Tc, &a.output, &a.result.stats).contains("triangles=1\n"));
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let fa = emit_run_report(da.path(), Kernel::Tc, &a.output, &a.result.stats).unwrap();
        let fb = emit_run_report(db.path(), Kernel::Tc, &b.output, &b.result.stats).unwrap();
        assert_eq!(fa.len(), 7);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x:?}");
        }
        assert_eq!(lanes_csv(&a.result.stats).lines().count(), 3);
    }

    #[test]
    fn ramp_rows() {
        let pts: Vec<_> = [1, 2, 4].iter().map(|&t| RampPoint { requests_per_thread: 64, ..RampPoint::new(8, t, 1, 1) }).collect();
        let rows = ramp(&NodeConfig::with_shape(1, 1), &pts).unwrap();
        let csv = ramp_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("transfer_words,"));
    }
}
