//! Running policies over dataset worlds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lazydrd_core::baselines::{self, PolicyEnd};
use lazydrd_core::bisect::{bisect_with_ledger, BernoulliBelief, BisectEnd, RegionSpec};
use lazydrd_core::dataset::Dataset;
use lazydrd_core::graph::{EdgeId, World};
use lazydrd_core::rng;
use lazydrd_core::trace::{EdgeLedger, RunTrace, Terminal};
use lazydrd_core::tree::{walk_tree, DecisionTree, Node};
use lazydrd_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyId {
    #[serde(rename = "direct+bisect")]
    DirectBisect,
    #[serde(rename = "direct-only")]
    DirectOnly,
    #[serde(rename = "lazysp-graph")]
    LazySpGraph,
    #[serde(rename = "lazysp-set")]
    LazySpSet,
    #[serde(rename = "random")]
    Random,
}

impl PolicyId {
    pub const ALL: [PolicyId; 5] = [
        PolicyId::DirectBisect,
        PolicyId::DirectOnly,
        PolicyId::LazySpGraph,
        PolicyId::LazySpSet,
        PolicyId::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::DirectBisect => "direct+bisect",
            PolicyId::DirectOnly => "direct-only",
            PolicyId::LazySpGraph => baselines::LAZYSP_GRAPH,
            PolicyId::LazySpSet => baselines::LAZYSP_SET,
            PolicyId::Random => baselines::RANDOM,
        }
    }

    pub fn needs_tree(self) -> bool {
        matches!(self, PolicyId::DirectBisect | PolicyId::DirectOnly)
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown policy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSel {
    Train,
    Test,
    All,
}

impl FromStr for SplitSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSel::Train),
            "test" => Ok(SplitSel::Test),
            "all" => Ok(SplitSel::All),
            _ => Err(Error::Contract(format!("unknown split {s:?}"))),
        }
    }
}

pub fn split_worlds(ds: &Dataset, split: SplitSel) -> Vec<usize> {
    match split {
        SplitSel::Train => ds.split.train.clone(),
        SplitSel::Test => ds.split.test.clone(),
        SplitSel::All => (0..ds.num_worlds()).collect(),
    }
}

/// One world's run together with its ground-truth outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldRun {
    pub trace: RunTrace,
    /// Some library path is valid in this world.
    pub feasible: bool,
    /// The returned (or, for `direct-only`, claimed) path is valid.
    pub success: bool,
}

/// Everything a run needs besides the world.
pub struct Runner<'a> {
    pub ds: &'a Dataset,
    pub tree: Option<&'a DecisionTree>,
    pub seed: u64,
    regions: RegionSpec,
    costs: Vec<f64>,
}

impl<'a> Runner<'a> {
    /// Fails if `policy` needs a tree and none (or one compiled for a
    /// different dataset) is given.
    pub fn new(ds: &'a Dataset, tree: Option<&'a DecisionTree>, seed: u64) -> Result<Self> {
        if let Some(t) = tree {
            let hash = ds.content_hash();
            if t.params.dataset_hash != hash {
                return Err(Error::Contract(format!(
                    "tree was compiled for dataset {} but this dataset is {hash}",
                    t.params.dataset_hash
                )));
            }
            if t.num_edges != ds.num_edges() || t.num_regions != ds.num_paths() {
                return Err(Error::Contract("tree dimensions do not match the dataset".into()));
            }
        }
        Ok(Runner {
            ds,
            tree,
            seed,
            regions: RegionSpec::from_library(&ds.paths, ds.num_edges())?,
            costs: ds.graph.eval_costs(),
        })
    }

    fn tree_for(&self, policy: PolicyId) -> Result<&'a DecisionTree> {
        self.tree
            .ok_or_else(|| Error::Contract(format!("policy {policy} needs a compiled tree")))
    }

    pub fn run_world(&self, policy: PolicyId, h: usize) -> Result<WorldRun> {
        let world = self.ds.world(h);
        let mut ledger = EdgeLedger::new(&world, &self.costs);
        let end = match policy {
            PolicyId::DirectBisect => self.direct_bisect(self.tree_for(policy)?, &mut ledger)?,
            PolicyId::DirectOnly => direct_only(self.tree_for(policy)?, &mut ledger)?,
            PolicyId::LazySpGraph => baselines::lazysp_graph(&self.ds.graph, &mut ledger)?,
            PolicyId::LazySpSet => baselines::lazysp_set(&self.ds.paths, &self.ds.graph, &mut ledger)?,
            PolicyId::Random => {
                let mut r = rng::stream(self.seed, rng::RANDOM_POLICY, h as u64);
                baselines::random_policy(&self.ds.paths, self.ds.num_edges(), &mut ledger, &mut r)?
            }
        };
        let success = match &end.terminal {
            Terminal::Solved { .. } => end.path.as_ref().is_some_and(|p| path_valid(&world, p)),
            Terminal::HandoffExhausted { claimed: Some(r) } => path_valid(&world, &self.ds.paths[*r as usize].edges),
            _ => false,
        };
        Ok(WorldRun {
            trace: ledger.into_trace(policy.name(), h, end.terminal, end.path),
            feasible: self.ds.has_feasible_path(h),
            success,
        })
    }

    /// Tree phase, then BISECt from the leaf bias. A Solved leaf is only
    /// trusted after its path checks out in the live world; when it does
    /// not, or the leaf is Dead, BISECt restarts from the root bias with
    /// everything observed so far.
    fn direct_bisect<O: lazydrd_core::oracle::EdgeOracle>(
        &self,
        tree: &DecisionTree,
        ledger: &mut EdgeLedger<'_, O>,
    ) -> Result<PolicyEnd> {
        let leaf = walk_tree(tree, ledger)?;
        let bias = match tree.node(leaf) {
            Node::Solved { region } => {
                let path = &self.ds.paths[*region as usize].edges;
                if verify_forward(path, ledger)? {
                    return Ok(solved(*region, path));
                }
                &tree.root_bias
            }
            Node::Dead => &tree.root_bias,
            Node::Handoff { bias, .. } => bias,
            Node::Internal { .. } => unreachable!("walk_tree stops at leaves"),
        };
        let belief = BernoulliBelief::from_bias(bias, tree.params.alpha)?;
        Ok(match bisect_with_ledger(&self.regions, belief, ledger)? {
            BisectEnd::Solved(r) => solved(r, &self.ds.paths[r as usize].edges),
            BisectEnd::AllRegionsDead => PolicyEnd {
                terminal: Terminal::AllRegionsDead,
                path: None,
            },
        })
    }

    /// Runs `policy` on every listed world, in parallel on the current rayon
    /// pool; results come back in the order of `worlds`.
    pub fn run_policy(&self, policy: PolicyId, worlds: &[usize]) -> Result<Vec<WorldRun>> {
        if policy.needs_tree() {
            self.tree_for(policy)?;
        }
        worlds.par_iter().map(|&h| self.run_world(policy, h)).collect()
    }
}

fn solved(region: u32, path: &[EdgeId]) -> PolicyEnd {
    PolicyEnd {
        terminal: Terminal::Solved { region: Some(region) },
        path: Some(path.to_vec()),
    }
}

fn path_valid(world: &World, path: &[EdgeId]) -> bool {
    path.iter().all(|&e| world.is_valid(e))
}

/// Evaluates the path's unknown edges in order, stopping at the first
/// invalid one.
fn verify_forward<O: lazydrd_core::oracle::EdgeOracle>(path: &[EdgeId], ledger: &mut EdgeLedger<'_, O>) -> Result<bool> {
    for &e in path {
        let ok = match ledger.status(e) {
            Some(v) => v,
            None => ledger.evaluate(e)?,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Tree phase only: report the path the leaf points at without checking it.
fn direct_only<O: lazydrd_core::oracle::EdgeOracle>(tree: &DecisionTree, ledger: &mut EdgeLedger<'_, O>) -> Result<PolicyEnd> {
    let leaf = walk_tree(tree, ledger)?;
    let claimed = match tree.node(leaf) {
        Node::Solved { region } => Some(*region),
        Node::Handoff { fallback_region, .. } => *fallback_region,
        Node::Dead => None,
        Node::Internal { .. } => unreachable!("walk_tree stops at leaves"),
    };
    Ok(PolicyEnd {
        terminal: Terminal::HandoffExhausted { claimed },
        path: None,
    })
}

/// Convenience wrapper: one policy over a split.
pub fn run_policy(
    policy: PolicyId,
    ds: &Dataset,
    split: SplitSel,
    tree: Option<&DecisionTree>,
    seed: u64,
) -> Result<Vec<WorldRun>> {
    Runner::new(ds, tree, seed)?.run_policy(policy, &split_worlds(ds, split))
}

/// Summary numbers for a batch of runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub worlds: usize,
    pub feasible: usize,
    /// Mean cost over feasible worlds.
    pub mean_cost: f64,
    pub variance: f64,
    /// Fraction of feasible worlds without a valid returned path.
    pub failure_rate: f64,
    pub infeasible_rate: f64,
    pub max_evaluations: usize,
}

pub fn summarize(runs: &[WorldRun]) -> RunSummary {
    let feas: Vec<&WorldRun> = runs.iter().filter(|r| r.feasible).collect();
    let costs: Vec<f64> = feas.iter().map(|r| r.trace.total_cost).collect();
    let (mean, var) = mean_var(&costs);
    let failures = feas.iter().filter(|r| !r.success).count();
    RunSummary {
        worlds: runs.len(),
        feasible: feas.len(),
        mean_cost: mean,
        variance: var,
        failure_rate: if feas.is_empty() { 0.0 } else { failures as f64 / feas.len() as f64 },
        infeasible_rate: if runs.is_empty() {
            0.0
        } else {
            (runs.len() - feas.len()) as f64 / runs.len() as f64
        },
        max_evaluations: runs.iter().map(|r| r.trace.num_evaluations()).max().unwrap_or(0),
    }
}

/// Mean and unbiased sample variance (0 for fewer than two values).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}
