//! Statistics, ablation configurations, microbenchmarks and report output.

pub mod ablation;
pub mod bench;
pub mod report;
pub mod spec;
pub mod suite;

pub use crate::stats::SimStats;
pub use ablation::{apply_ablation, attribute, AblationConfig, AblationError};
pub use suite::{run_ablation_suite, run_once, AblationTable, LadderRow, SuiteError};
