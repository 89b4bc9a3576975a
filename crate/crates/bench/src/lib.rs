//! Benchmarking for the lazy path-library policies: per-world runs, paired
//! normalized costs with bootstrap intervals, training-size sweeps and the
//! files they are written to.

pub mod bootstrap;
pub mod harness;
pub mod report;
pub mod sweep;

pub use harness::{run_policy, PolicyId, Runner, SplitSel, WorldRun};
