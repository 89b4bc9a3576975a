//! Feasible-path identification with minimal edge-evaluation cost.
//!
//! Worlds are hypotheses, edges are tests and library paths are decision
//! regions. [`ec2`] runs the greedy Noisy-OR EC² policy over an explicit world
//! database, [`tree`] compiles it into an offline decision tree, and
//! [`bisect`] finishes episodes under an independent-Bernoulli belief.

pub mod baselines;
pub mod bisect;
pub mod bits;
pub mod dataset;
pub mod ec2;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod search;
pub mod trace;
pub mod tree;

pub use error::{Error, Result};
