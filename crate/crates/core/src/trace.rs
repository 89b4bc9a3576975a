//! Evaluation records and the per-run edge ledger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Path, World};
use crate::oracle::EdgeOracle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub edge: EdgeId,
    pub valid: bool,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Terminal {
    /// A path was verified valid. `region` is its library index, if any.
    Solved { region: Option<u32> },
    /// Every library path holds an evaluated invalid edge.
    AllRegionsDead,
    /// The evaluated invalid edges disconnect start from goal.
    Infeasible,
    /// The episode stopped at a tree leaf without further evaluation;
    /// `claimed` is the path the tree would return.
    HandoffExhausted { claimed: Option<u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub policy: String,
    pub world: usize,
    pub records: Vec<Record>,
    pub terminal: Terminal,
    /// Edges of the returned path, when one was returned.
    pub path: Option<Vec<EdgeId>>,
    pub total_cost: f64,
}

impl RunTrace {
    pub fn num_evaluations(&self) -> usize {
        self.records.len()
    }

    pub fn solved(&self) -> bool {
        matches!(self.terminal, Terminal::Solved { .. })
    }

    /// Checks the trace against the world it ran on: distinct edges,
    /// outcomes matching the world, cost consistent with the records, and a
    /// Solved path fully evaluated valid. Dead verdicts are witnessed by an
    /// evaluated invalid edge on every library path.
    pub fn audit(&self, world: &World, library: &[Path]) -> std::result::Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !seen.insert(r.edge) {
                return Err(format!("edge {} evaluated twice", r.edge));
            }
            if world.is_valid(r.edge) != r.valid {
                return Err(format!("edge {} recorded with wrong outcome", r.edge));
            }
        }
        let cost: f64 = self.records.iter().map(|r| r.cost).sum();
        if (cost - self.total_cost).abs() > 1e-9 * cost.max(1.0) {
            return Err(format!("total_cost {} != sum of records {cost}", self.total_cost));
        }
        let valid_seen = |e: EdgeId| self.records.iter().any(|r| r.edge == e && r.valid);
        let invalid_seen = |e: EdgeId| self.records.iter().any(|r| r.edge == e && !r.valid);
        match &self.terminal {
            Terminal::Solved { region } => {
                let path = self.path.as_ref().ok_or("Solved trace without a path")?;
                if let Some(r) = region {
                    if library.get(*r as usize).map(|p| &p.edges) != Some(path) {
                        return Err(format!("Solved path does not match library path {r}"));
                    }
                }
                if let Some(&e) = path.iter().find(|&&e| !valid_seen(e)) {
                    return Err(format!("Solved path edge {e} not evaluated valid"));
                }
            }
            Terminal::AllRegionsDead => {
                if let Some(r) = library.iter().position(|p| !p.edges.iter().any(|&e| invalid_seen(e))) {
                    return Err(format!("path {r} has no evaluated invalid edge"));
                }
            }
            Terminal::Infeasible | Terminal::HandoffExhausted { .. } => {}
        }
        Ok(())
    }
}

/// Per-edge status (unknown / valid / invalid) and evaluation log for one
/// episode. Re-evaluating an edge is a contract error.
pub struct EdgeLedger<'c, O> {
    oracle: O,
    costs: &'c [f64],
    status: Vec<Option<bool>>,
    records: Vec<Record>,
}

impl<'c, O: EdgeOracle> EdgeLedger<'c, O> {
    pub fn new(oracle: O, costs: &'c [f64]) -> Self {
        EdgeLedger {
            oracle,
            costs,
            status: vec![None; costs.len()],
            records: Vec::new(),
        }
    }

    pub fn evaluate(&mut self, e: EdgeId) -> Result<bool> {
        let slot = self
            .status
            .get_mut(e as usize)
            .ok_or_else(|| Error::Contract(format!("edge {e} out of range")))?;
        if slot.is_some() {
            return Err(Error::Contract(format!("edge {e} evaluated twice")));
        }
        let v = self.oracle.evaluate(e)?;
        *slot = Some(v);
        self.records.push(Record {
            edge: e,
            valid: v,
            cost: self.costs[e as usize],
        });
        Ok(v)
    }

    #[inline]
    pub fn status(&self, e: EdgeId) -> Option<bool> {
        self.status[e as usize]
    }

    pub fn statuses(&self) -> &[Option<bool>] {
        &self.status
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn costs(&self) -> &'c [f64] {
        self.costs
    }

    pub fn cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    pub fn oracle_mut(&mut self) -> &mut O {
        &mut self.oracle
    }

    pub fn into_trace(self, policy: &str, world: usize, terminal: Terminal, path: Option<Vec<EdgeId>>) -> RunTrace {
        let total_cost = self.cost();
        RunTrace {
            policy: policy.to_string(),
            world,
            records: self.records,
            terminal,
            path,
            total_cost,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitSet;

    #[test]
    fn ledger_rejects_double_evaluation() {
        let w = World(BitSet::from_bools(&[true, false]));
        let costs = [1.0, 2.5];
        let mut l = EdgeLedger::new(&w, &costs);
        assert!(!l.evaluate(1).unwrap());
        assert!(matches!(l.evaluate(1), Err(Error::Contract(_))));
        assert!(l.evaluate(0).unwrap());
        assert_eq!(l.cost(), 3.5);
        assert_eq!(l.status(1), Some(false));
        let t = l.into_trace("x", 0, Terminal::Infeasible, None);
        assert_eq!(t.total_cost, 3.5);
        assert!(t.audit(&w, &[]).is_ok());
    }
}
