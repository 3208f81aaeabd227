//! End-to-end experiments: target motion, expert datasets, closed-loop runs
//! and their metrics.

pub mod config;
pub mod data;
pub mod report;
pub mod sim;
pub mod target;

pub use config::{ExpertRegions, GpSettings, Mode, ScenarioConfig};
pub use data::{generate_dataset, prepare_experts, Samples, TrainedHyper};
pub use report::{compare, gain_condition_report, Comparison, GainConditionReport};
pub use sim::{run, RunInputs, RunMetrics, RunOutput, RunStatus, RunTrace, Simulator};
pub use target::TargetMotion;
