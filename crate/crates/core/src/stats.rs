//! Run statistics gathered by the fabric.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub total_cycles: u64,
    pub clock_hz: f64,
    pub lane_busy_cycles: Vec<u64>,
    pub threads_created: u64,
    pub threads_terminated: u64,
    pub invocations: u64,
    pub instructions: u64,
    /// Instructions per invocation -> number of invocations.
    pub instr_histogram: BTreeMap<u64, u64>,
    /// DRAM requests per invocation -> number of invocations.
    pub memref_histogram: BTreeMap<u64, u64>,
    pub label_invocations: BTreeMap<String, u64>,
    pub dram_read_bytes: u64,
    pub dram_write_bytes: u64,
    pub dram_requests: u64,
    /// Sum over requests of (complete_cycle - issue_cycle).
    pub dram_latency_sum: u64,
    /// Per-lane sum of request latencies, for per-lane mean outstanding.
    pub lane_latency_sum: Vec<u64>,
    pub sample_interval: u64,
    /// Outstanding DRAM requests node-wide, sampled every `sample_interval` cycles.
    pub outstanding_samples: Vec<u64>,
    pub max_outstanding: u64,
    /// DRAM bytes completed in each `sample_interval`-cycle bucket.
    pub completed_bytes: Vec<u64>,
    pub events_sent: u64,
    pub events_delivered: u64,
    pub dropped_responses: u64,
    pub high_water_events: u64,
    pub max_queue_depth: usize,
    pub dispatch_penalty_cycles: u64,
    pub first_thread_cycle: Vec<Option<u64>>,
    pub last_thread_cycle: Vec<Option<u64>>,
}

impl SimStats {
    pub fn runtime_seconds(&self) -> f64 {
        self.total_cycles as f64 / self.clock_hz
    }

    pub fn dram_bytes(&self) -> u64 {
        self.dram_read_bytes + self.dram_write_bytes
    }

    /// Traffic over runtime, in GB/s (10^9 bytes).
    pub fn bandwidth_gbps(&self) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        self.dram_bytes() as f64 / self.runtime_seconds() / 1e9
    }

    /// Bandwidth over the buckets between fractions `lo` and `hi` of the run, in GB/s.
    pub fn windowed_bandwidth_gbps(&self, lo: f64, hi: f64) -> f64 {
        let n = self.completed_bytes.len();
        let (a, b) = ((n as f64 * lo).floor() as usize, (n as f64 * hi).ceil() as usize);
        if b <= a {
            return self.bandwidth_gbps();
        }
        let bytes: u64 = self.completed_bytes[a..b.min(n)].iter().sum();
        let cycles = ((b.min(n) - a) as u64 * self.sample_interval) as f64;
        bytes as f64 / cycles * self.clock_hz / 1e9
    }

    pub fn utilization(&self, lane: usize) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        self.lane_busy_cycles[lane] as f64 / self.total_cycles as f64
    }

    /// Max minus min lane utilization.
    pub fn utilization_spread(&self) -> f64 {
        let u: Vec<f64> = (0..self.lane_busy_cycles.len()).map(|l| self.utilization(l)).collect();
        let max = u.iter().cloned().fold(f64::MIN, f64::max);
        let min = u.iter().cloned().fold(f64::MAX, f64::min);
        if u.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// Time-averaged number of outstanding DRAM requests over the whole run.
    pub fn mean_outstanding(&self) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        self.dram_latency_sum as f64 / self.total_cycles as f64
    }

    pub fn lane_mean_outstanding(&self, lane: usize) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        self.lane_latency_sum[lane] as f64 / self.total_cycles as f64
    }

    pub fn sampled_mean_outstanding(&self) -> f64 {
        if self.outstanding_samples.is_empty() {
            return 0.0;
        }
        self.outstanding_samples.iter().sum::<u64>() as f64 / self.outstanding_samples.len() as f64
    }

    pub fn mean_latency_cycles(&self) -> f64 {
        if self.dram_requests == 0 {
            return 0.0;
        }
        self.dram_latency_sum as f64 / self.dram_requests as f64
    }

    pub fn mean_request_bytes(&self) -> f64 {
        if self.dram_requests == 0 {
            return 0.0;
        }
        self.dram_bytes() as f64 / self.dram_requests as f64
    }

    /// Bandwidth predicted by Little's law from the sampled outstanding count, mean request
    /// size and mean latency, in GB/s.
    pub fn littles_law_bandwidth_gbps(&self) -> f64 {
        let lat = self.mean_latency_cycles();
        if lat == 0.0 {
            return 0.0;
        }
        self.sampled_mean_outstanding() * self.mean_request_bytes() / lat * self.clock_hz / 1e9
    }

    pub fn mean_instructions_per_invocation(&self) -> f64 {
        if self.invocations == 0 {
            return 0.0;
        }
        self.instructions as f64 / self.invocations as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn littles_law_identity_on_constructed_stats() {
        let s = SimStats {
            total_cycles: 6000,
            clock_hz: 2e9,
            dram_read_bytes: 64 * 1000,
            dram_requests: 1000,
            dram_latency_sum: 203 * 1000,
            outstanding_samples: vec![203 * 1000 / 6000; 60],
            ..Default::default()
        };
        let bw = s.bandwidth_gbps();
        assert!((bw - 64.0 * 1000.0 / 6000.0 * 2.0).abs() < 1e-9);
        assert!((s.littles_law_bandwidth_gbps() / bw - 1.0).abs() < 0.05);
    }

    #[test]
    fn empty_stats_are_zero() {
        let s = SimStats { clock_hz: 2e9, ..Default::default() };
        assert_eq!(s.bandwidth_gbps(), 0.0);
        assert_eq!(s.mean_outstanding(), 0.0);
        assert_eq!(s.utilization_spread(), 0.0);
    }
}
