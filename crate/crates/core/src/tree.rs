//! Offline compilation of the greedy policy into a binary decision tree.
//!
//! Nodes are stored in post-order (children before parents, the root last),
//! so node numbering is the same whether sibling subtrees are compiled
//! sequentially or in parallel.

use std::path::Path as FsPath;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::ec2::{DrdProblem, HandoffCause, SolveState, VersionSpace};
use crate::error::{Error, Result};
use crate::graph::EdgeId;
use crate::oracle::EdgeOracle;
use crate::trace::EdgeLedger;

pub const TREE_FORMAT: &str = "lazydrd-tree";
pub const TREE_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_MAX_NODES: usize = 200_000;

/// Subtrees with fewer active hypotheses than this are compiled sequentially.
const PAR_MIN_ACTIVE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafCause {
    Threshold,
    NoUsefulTest,
    ZeroMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        edge: EdgeId,
        /// Child for outcome 0 (invalid) and 1 (valid).
        children: [u32; 2],
    },
    Solved {
        region: u32,
    },
    Dead,
    Handoff {
        bias: Vec<f64>,
        active_count: usize,
        cause: LeafCause,
        /// Lowest region holding a surviving training world.
        fallback_region: Option<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub eta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub dataset_hash: String,
    pub train_size: usize,
    pub max_nodes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub depth: usize,
    pub internal: usize,
    pub solved_leaves: usize,
    pub dead_leaves: usize,
    pub handoff_leaves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub format: String,
    pub schema_version: u32,
    pub params: TreeParams,
    pub num_edges: usize,
    pub num_regions: usize,
    pub stats: TreeStats,
    /// Bias of the full training set, used when a test world contradicts a
    /// Solved or Dead leaf.
    pub root_bias: Vec<f64>,
    pub root: u32,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn node(&self, i: u32) -> &Node {
        &self.nodes[i as usize]
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let t: DecisionTree = serde_json::from_slice(bytes)?;
        if t.format != TREE_FORMAT {
            return Err(Error::Parse(format!("not a tree file (format {:?})", t.format)));
        }
        if t.schema_version != TREE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: t.schema_version,
                expected: TREE_SCHEMA_VERSION,
            });
        }
        t.check()?;
        Ok(t)
    }

    /// Structural checks: child indices precede parents, edges are in range
    /// and distinct along every root-to-leaf path, bias vectors have full
    /// length.
    pub fn check(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 || self.root as usize != n - 1 {
            return Err(Error::Parse("root must be the last node".into()));
        }
        if self.root_bias.len() != self.num_edges {
            return Err(Error::Parse("root bias has wrong length".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Internal { edge, children } => {
                    if *edge as usize >= self.num_edges || children.iter().any(|&c| c as usize >= i) {
                        return Err(Error::Parse(format!("node {i} is malformed")));
                    }
                }
                Node::Solved { region } if *region as usize >= self.num_regions => {
                    return Err(Error::Parse(format!("node {i} names region {region}")));
                }
                Node::Handoff { bias, .. } if bias.len() != self.num_edges => {
                    return Err(Error::Parse(format!("node {i} bias has wrong length")));
                }
                _ => {}
            }
        }
        let mut stack = vec![(self.root, Vec::<EdgeId>::new())];
        while let Some((i, path)) = stack.pop() {
            if let Node::Internal { edge, children } = self.node(i) {
                if path.contains(edge) {
                    return Err(Error::Parse(format!("edge {edge} repeats below node {i}")));
                }
                let mut next = path.clone();
                next.push(*edge);
                stack.push((children[0], next.clone()));
                stack.push((children[1], next));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        crate::dataset::write_atomic(path, &self.to_json()?)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_json(&bytes)
    }
}

/// Handoff bias: `α · (valid fraction among active) + (1 − α)/2` for unobserved
/// edges, `α · outcome + (1 − α)/2` for observed ones.
pub fn bias_vector(problem: &DrdProblem, vs: &VersionSpace, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha {alpha} not in (0, 1)")));
    }
    if vs.active.none() {
        return Err(Error::Contract("bias of an empty version space".into()));
    }
    let mut theta: Vec<f64> = problem
        .valid_fractions(vs)
        .into_iter()
        .map(|f| alpha * f + (1.0 - alpha) * 0.5)
        .collect();
    for (&e, &o) in &vs.observed {
        theta[e as usize] = observed_bias(o, alpha);
    }
    Ok(theta)
}

fn observed_bias(outcome: bool, alpha: f64) -> f64 {
    alpha * if outcome { 1.0 } else { 0.0 } + (1.0 - alpha) * 0.5
}

#[derive(Clone, Debug)]
pub struct CompileOptions {
    pub eta: f64,
    pub alpha: f64,
    pub max_nodes: usize,
    pub seed: u64,
    pub dataset_hash: String,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            eta: DEFAULT_ETA,
            alpha: DEFAULT_ALPHA,
            max_nodes: DEFAULT_MAX_NODES,
            seed: 0,
            dataset_hash: String::new(),
        }
    }
}

struct Compiler<'a> {
    problem: &'a DrdProblem,
    opts: &'a CompileOptions,
    count: AtomicUsize,
}

/// Nodes of a subtree in local post-order; the last one is its root.
struct Subtree {
    nodes: Vec<Node>,
    depth: usize,
}

impl Compiler<'_> {
    fn leaf(&self, node: Node) -> Result<Subtree> {
        self.bump()?;
        Ok(Subtree { nodes: vec![node], depth: 0 })
    }

    fn bump(&self) -> Result<()> {
        let n = self.count.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.opts.max_nodes {
            return Err(Error::TreeTooLarge(self.opts.max_nodes));
        }
        Ok(())
    }

    fn handoff(&self, vs: &VersionSpace, cause: LeafCause) -> Result<Subtree> {
        self.leaf(Node::Handoff {
            bias: bias_vector(self.problem, vs, self.opts.alpha)?,
            active_count: vs.active_count(),
            cause,
            fallback_region: self.problem.first_live_region(&vs.active),
        })
    }

    fn build(&self, vs: VersionSpace, parent_bias: Option<&[f64]>) -> Result<Subtree> {
        let p = self.problem;
        match p.is_solved(&vs) {
            SolveState::Solved(r) => return self.leaf(Node::Solved { region: r }),
            SolveState::AllRegionsDead { off_database: false } => return self.leaf(Node::Dead),
            SolveState::AllRegionsDead { off_database: true } => {
                let bias = parent_bias.ok_or_else(|| Error::Contract("empty training set".into()))?;
                let mut bias = bias.to_vec();
                for (&e, &o) in &vs.observed {
                    bias[e as usize] = observed_bias(o, self.opts.alpha);
                }
                return self.leaf(Node::Handoff {
                    bias,
                    active_count: 0,
                    cause: LeafCause::ZeroMass,
                    fallback_region: None,
                });
            }
            SolveState::Unsolved => {}
        }
        if p.active_fraction(&vs) <= self.opts.eta {
            return self.handoff(&vs, LeafCause::Threshold);
        }
        let Some(best) = p.select_test(&vs, &p.unobserved(&vs)) else {
            return self.handoff(&vs, LeafCause::NoUsefulTest);
        };
        self.bump()?;
        let bias = bias_vector(p, &vs, self.opts.alpha)?;
        let v0 = p.observe(&vs, best.edge, false)?;
        let v1 = p.observe(&vs, best.edge, true)?;
        let (a, b) = if vs.active_count() >= PAR_MIN_ACTIVE {
            rayon::join(|| self.build(v0, Some(&bias)), || self.build(v1, Some(&bias)))
        } else {
            (self.build(v0, Some(&bias)), self.build(v1, Some(&bias)))
        };
        let (a, b) = (a?, b?);
        let depth = 1 + a.depth.max(b.depth);
        let off_b = a.nodes.len() as u32;
        let mut nodes = a.nodes;
        nodes.extend(b.nodes.into_iter().map(|n| shift(n, off_b)));
        let children = [off_b - 1, nodes.len() as u32 - 1];
        nodes.push(Node::Internal { edge: best.edge, children });
        Ok(Subtree { nodes, depth })
    }
}

fn shift(node: Node, by: u32) -> Node {
    match node {
        Node::Internal { edge, children } => Node::Internal {
            edge,
            children: [children[0] + by, children[1] + by],
        },
        other => other,
    }
}

/// Compiles the greedy policy over every hypothesis of `problem`.
pub fn compile(problem: &DrdProblem, opts: &CompileOptions) -> Result<DecisionTree> {
    if problem.num_hypotheses() == 0 {
        return Err(Error::Contract("training set is empty".into()));
    }
    if !(0.0..=1.0).contains(&opts.eta) {
        return Err(Error::Contract(format!("eta {} outside [0, 1]", opts.eta)));
    }
    let root = problem.root();
    let root_bias = bias_vector(problem, &root, opts.alpha)?;
    let c = Compiler {
        problem,
        opts,
        count: AtomicUsize::new(0),
    };
    let sub = c.build(root, None)?;
    let mut stats = TreeStats {
        nodes: sub.nodes.len(),
        depth: sub.depth,
        ..TreeStats::default()
    };
    for n in &sub.nodes {
        match n {
            Node::Internal { .. } => stats.internal += 1,
            Node::Solved { .. } => stats.solved_leaves += 1,
            Node::Dead => stats.dead_leaves += 1,
            Node::Handoff { .. } => stats.handoff_leaves += 1,
        }
    }
    Ok(DecisionTree {
        format: TREE_FORMAT.into(),
        schema_version: TREE_SCHEMA_VERSION,
        params: TreeParams {
            eta: opts.eta,
            alpha: opts.alpha,
            seed: opts.seed,
            dataset_hash: opts.dataset_hash.clone(),
            train_size: problem.num_hypotheses(),
            max_nodes: opts.max_nodes,
        },
        num_edges: problem.num_tests(),
        num_regions: problem.num_regions(),
        stats,
        root_bias,
        root: sub.nodes.len() as u32 - 1,
        nodes: sub.nodes,
    })
}

/// Walks from the root, evaluating each internal node's edge through the
/// ledger (edges it already knows are not re-evaluated). Returns the leaf.
pub fn walk_tree<O: EdgeOracle>(tree: &DecisionTree, ledger: &mut EdgeLedger<'_, O>) -> Result<u32> {
    let mut i = tree.root;
    loop {
        match tree.node(i) {
            Node::Internal { edge, children } => {
                let o = match ledger.status(*edge) {
                    Some(v) => v,
                    None => ledger.evaluate(*edge)?,
                };
                i = children[o as usize];
            }
            _ => return Ok(i),
        }
    }
}

/// Runs the tree against a fresh oracle; returns the leaf index and the
/// evaluation records.
pub fn execute_tree<O: EdgeOracle>(tree: &DecisionTree, oracle: O) -> Result<(u32, Vec<crate::trace::Record>)> {
    let costs = vec![1.0; tree.num_edges];
    let mut ledger = EdgeLedger::new(oracle, &costs);
    let leaf = walk_tree(tree, &mut ledger)?;
    Ok((leaf, ledger.records().to_vec()))
}

impl From<LeafCause> for HandoffCause {
    fn from(c: LeafCause) -> Self {
        match c {
            LeafCause::Threshold => HandoffCause::Threshold,
            LeafCause::NoUsefulTest => HandoffCause::NoUsefulTest,
            LeafCause::ZeroMass => HandoffCause::OffDatabase,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BitMatrix, BitSet};
    use crate::ec2::Prior;
    use crate::graph::World;

    fn matrix(rows: &[&[u8]]) -> BitMatrix {
        let cols = rows.first().map_or(0, |r| r.len());
        BitMatrix::from_rows(
            cols,
            rows.iter()
                .map(|r| BitSet::from_bools(&r.iter().map(|&b| b == 1).collect::<Vec<_>>()))
                .collect(),
        )
    }

    fn three() -> DrdProblem {
        let theta = matrix(&[&[1, 1], &[0, 1], &[0, 1]]);
        let member = matrix(&[&[1, 0], &[1, 1], &[0, 1]]);
        DrdProblem::new(&theta, &member, vec![1.0, 1.0], Prior::Uniform).unwrap()
    }

    fn opts(eta: f64) -> CompileOptions {
        CompileOptions {
            eta,
            ..CompileOptions::default()
        }
    }

    #[test]
    fn bias_examples() {
        let theta = matrix(&[&[1, 0, 1], &[1, 1, 0]]);
        let member = matrix(&[&[1], &[0]]);
        let p = DrdProblem::new(&theta, &member, vec![1.0; 3], Prior::Uniform).unwrap();
        let b = bias_vector(&p, &p.root(), 0.9).unwrap();
        assert!((b[0] - 0.95).abs() < 1e-15);
        assert!((b[1] - 0.5).abs() < 1e-15);
        assert!((b[2] - 0.5).abs() < 1e-15);
        let vs = p.observe(&p.root(), 1, false).unwrap();
        let b = bias_vector(&p, &vs, 0.9).unwrap();
        assert!((b[1] - 0.05).abs() < 1e-15);
        assert!((b[2] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn eta_one_gives_single_handoff() {
        let p = three();
        let t = compile(&p, &opts(1.0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        match &t.nodes[0] {
            Node::Handoff { bias, active_count, .. } => {
                assert_eq!(*active_count, 3);
                assert_eq!(bias, &t.root_bias);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn region_holding_every_world_is_one_leaf() {
        let theta = matrix(&[&[1, 0], &[1, 1]]);
        let member = matrix(&[&[1], &[1]]);
        let p = DrdProblem::new(&theta, &member, vec![1.0; 2], Prior::Uniform).unwrap();
        let t = compile(&p, &opts(0.0)).unwrap();
        assert_eq!(t.nodes, vec![Node::Solved { region: 0 }]);
        let (leaf, recs) = execute_tree(&t, &World::all_valid(2)).unwrap();
        assert_eq!(leaf, 0);
        assert!(recs.is_empty());
    }

    #[test]
    fn three_hypothesis_tree() {
        let t = compile(&three(), &opts(0.0)).unwrap();
        assert_eq!(t.stats.nodes, 3);
        assert_eq!(t.node(t.root), &Node::Internal { edge: 0, children: [0, 1] });
        assert_eq!(t.nodes[0], Node::Solved { region: 1 });
        assert_eq!(t.nodes[1], Node::Solved { region: 0 });
        assert_eq!(t.stats.depth, 1);
    }

    #[test]
    fn max_nodes_is_enforced() {
        let mut o = opts(0.0);
        o.max_nodes = 2;
        assert!(matches!(compile(&three(), &o), Err(Error::TreeTooLarge(2))));
    }

    #[test]
    fn json_round_trip() {
        let t = compile(&three(), &opts(0.0)).unwrap();
        let bytes = t.to_json().unwrap();
        assert_eq!(DecisionTree::from_json(&bytes).unwrap(), t);
        let mut bad = t.clone();
        bad.schema_version = 9;
        assert!(matches!(
            DecisionTree::from_json(&bad.to_json().unwrap()),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }
}
