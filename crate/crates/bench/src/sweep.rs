//! Cost and failure rate as a function of training-set size.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use lazydrd_core::dataset::Dataset;
use lazydrd_core::ec2::DrdProblem;
use lazydrd_core::rng;
use lazydrd_core::tree::{compile, CompileOptions};
use lazydrd_core::{Error, Result};

use crate::harness::{mean_var, summarize, PolicyId, Runner, WorldRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub eta: f64,
    pub alpha: f64,
    pub max_nodes: usize,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub train_size: usize,
    /// Over feasible test worlds, pooled across trials.
    pub mean_cost: f64,
    pub variance: f64,
    pub direct_only_failure: f64,
    pub direct_only_failure_stderr: f64,
    pub direct_bisect_failure: f64,
    pub mean_tree_nodes: f64,
    pub max_tree_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub dataset_hash: String,
    pub options: SweepOptions,
    pub test_worlds: usize,
    pub feasible_test_worlds: usize,
    pub points: Vec<SweepPoint>,
}

/// Training worlds in the order trial `trial` adds them; every size uses a
/// prefix of this list, so smaller training sets nest inside larger ones.
pub fn training_order(ds: &Dataset, seed: u64, trial: usize) -> Vec<usize> {
    let mut order = ds.split.train.clone();
    order.shuffle(&mut rng::stream(seed, rng::SWEEP, trial as u64));
    order
}

pub fn sweep_training_size(ds: &Dataset, sizes: &[usize], opts: &SweepOptions) -> Result<Sweep> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("sizes must be nonempty and strictly increasing".into()));
    }
    if sizes[0] == 0 || *sizes.last().unwrap() > ds.split.train.len() {
        return Err(Error::Contract(format!(
            "sizes must lie in 1..={} (the training split)",
            ds.split.train.len()
        )));
    }
    if opts.trials == 0 {
        return Err(Error::Contract("trials must be at least 1".into()));
    }
    let hash = ds.content_hash();
    let test = &ds.split.test;
    let orders: Vec<Vec<usize>> = (0..opts.trials).map(|t| training_order(ds, opts.seed, t)).collect();
    let mut points = Vec::new();
    for &n in sizes {
        let mut bisect_runs: Vec<WorldRun> = Vec::new();
        let mut only_runs: Vec<WorldRun> = Vec::new();
        let mut nodes = 0usize;
        let mut depth = 0usize;
        for order in &orders {
            let mut train = order[..n].to_vec();
            train.sort_unstable();
            let problem = DrdProblem::from_worlds(ds, &train)?;
            let tree = compile(
                &problem,
                &CompileOptions {
                    eta: opts.eta,
                    alpha: opts.alpha,
                    max_nodes: opts.max_nodes,
                    seed: opts.seed,
                    dataset_hash: hash.clone(),
                },
            )?;
            nodes += tree.stats.nodes;
            depth = depth.max(tree.stats.depth);
            let runner = Runner::new(ds, Some(&tree), opts.seed)?;
            bisect_runs.extend(runner.run_policy(PolicyId::DirectBisect, test)?);
            only_runs.extend(runner.run_policy(PolicyId::DirectOnly, test)?);
        }
        let costs: Vec<f64> = bisect_runs.iter().filter(|r| r.feasible).map(|r| r.trace.total_cost).collect();
        let (mean, var) = mean_var(&costs);
        let only = summarize(&only_runs);
        let feas = only.feasible.max(1) as f64;
        points.push(SweepPoint {
            train_size: n,
            mean_cost: mean,
            variance: var,
            direct_only_failure: only.failure_rate,
            direct_only_failure_stderr: (only.failure_rate * (1.0 - only.failure_rate) / feas).sqrt(),
            direct_bisect_failure: summarize(&bisect_runs).failure_rate,
            mean_tree_nodes: nodes as f64 / opts.trials as f64,
            max_tree_depth: depth,
        });
    }
    Ok(Sweep {
        dataset_hash: hash,
        options: opts.clone(),
        test_worlds: test.len(),
        feasible_test_worlds: test.iter().filter(|&&h| ds.has_feasible_path(h)).count(),
        points,
    })
}
