//! Experiment harness for the hybrid RIS simulator: TOML experiment specs
//! with sweeps, multi-seed parallel runs with JSONL logs and checkpoints,
//! paired comparison tables and the acceptance suite.

pub mod acceptance;
pub mod compare;
pub mod config;
pub mod error;
pub mod runner;

pub use acceptance::{CriterionResult, Suite};
pub use compare::{compare, compare_dirs, ComparisonRow};
pub use config::{ExperimentSpec, SweepPoint};
pub use error::{HarnessError, Result};
pub use runner::{run, RunOptions, RunSummary, SeedRun, SeedSummary};
