use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{Mechanisms, NodeConfig};

/// The five legal points of the mechanism ladder, each adding one mechanism to the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AblationConfig {
    /// In-order lane: blocking memory, one context, software dispatch and operand copy.
    Pe,
    /// + split-transaction memory.
    Som,
    /// + lightweight threads.
    Lwt,
    /// + ultra-short threads.
    Ust,
    /// + event-driven scheduling: the full design.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AblationError {
    #[error("illegal mechanism combination som={som} lwt={lwt} ust={ust} eds={eds}")]
    Illegal { som: bool, lwt: bool, ust: bool, eds: bool },
    #[error("unknown ablation point {0:?}")]
    Unknown(String),
}

impl AblationConfig {
    pub const LADDER: [AblationConfig; 5] =
        [AblationConfig::Pe, AblationConfig::Som, AblationConfig::Lwt, AblationConfig::Ust, AblationConfig::Full];

    /// `(som, lwt, ust, eds)`.
    pub fn flags(self) -> (bool, bool, bool, bool) {
        let k = self as u8;
        (k >= 1, k >= 2, k >= 3, k >= 4)
    }

    pub fn from_flags(som: bool, lwt: bool, ust: bool, eds: bool) -> Result<Self, AblationError> {
        Self::LADDER
            .into_iter()
            .find(|p| p.flags() == (som, lwt, ust, eds))
            .ok_or(AblationError::Illegal { som, lwt, ust, eds })
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationConfig::Pe => "PE",
            AblationConfig::Som => "+SoM",
            AblationConfig::Lwt => "+LWT",
            AblationConfig::Ust => "+UST",
            AblationConfig::Full => "full",
        }
    }

    /// The mechanism this point adds over the previous one.
    pub fn mechanism(self) -> Option<&'static str> {
        match self {
            AblationConfig::Pe => None,
            AblationConfig::Som => Some("SoM"),
            AblationConfig::Lwt => Some("LWT"),
            AblationConfig::Ust => Some("UST"),
            AblationConfig::Full => Some("EDS"),
        }
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationConfig {
    type Err = AblationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pe" => Ok(AblationConfig::Pe),
            "som" | "+som" | "pe+som" => Ok(AblationConfig::Som),
            "lwt" | "+lwt" => Ok(AblationConfig::Lwt),
            "ust" | "+ust" => Ok(AblationConfig::Ust),
            "full" | "eds" | "+eds" => Ok(AblationConfig::Full),
            _ => Err(AblationError::Unknown(s.to_string())),
        }
    }
}

/// Sets the node's mechanism flags for a ladder point, keeping its penalty constants.
pub fn apply_ablation(config: AblationConfig, node: &NodeConfig) -> NodeConfig {
    let (som, lwt, ust, eds) = config.flags();
    let mut n = node.clone();
    n.mechanisms = Mechanisms { som, lwt, ust, eds, ..node.mechanisms.clone() };
    n
}

/// Share of the total log-speedup contributed by each step of the ladder.
///
/// `runtimes` are in ladder order starting at PE. The result has one entry per step and
/// sums to 1 whenever the total speedup differs from 1.
pub fn attribute(runtimes: &[u64]) -> Vec<f64> {
    if runtimes.len() < 2 {
        return Vec::new();
    }
    let total = (runtimes[0] as f64 / runtimes[runtimes.len() - 1] as f64).ln();
    runtimes
        .windows(2)
        .map(|w| {
            let step = (w[0] as f64 / w[1] as f64).ln();
            if total == 0.0 {
                0.0
            } else {
                step / total
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_and_pe_configs() {
        let base = NodeConfig::with_shape(1, 4);
        let full = apply_ablation(AblationConfig::Full, &base).lane_config();
        assert_eq!((full.contexts, full.blocking_memory, full.dispatch_penalty, full.dispatch_cycles_per_operand), (128, false, 0, 0));
        let pe = apply_ablation(AblationConfig::Pe, &base).lane_config();
        assert_eq!((pe.contexts, pe.blocking_memory, pe.dispatch_penalty, pe.dispatch_cycles_per_operand), (1, true, 50, 2));
    }

    #[test]
    fn only_ladder_points_are_legal() {
        assert_eq!(AblationConfig::from_flags(true, true, false, false), Ok(AblationConfig::Lwt));
        assert!(AblationConfig::from_flags(false, true, false, false).is_err());
        assert!(AblationConfig::from_flags(true, false, true, true).is_err());
    }

    #[test]
    fn attribution_sums_to_one() {
        let f = attribute(&[2300, 1000, 400, 300, 100]);
        assert_eq!(f.len(), 4);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
