//! Decision-region determination under independent Bernoulli edge outcomes.
//!
//! The hypothesis set is implicit: every world in `{0,1}^|E|` consistent
//! with the observations, weighted by the product prior `Π β_e^{x_e}
//! (1−β_e)^{1−x_e}`. With `θ_e` the effective probability (β for unobserved
//! edges, the outcome for observed ones), `s_e = θ_e² + (1−θ_e)²`,
//! `p_r = Π_{e∈E_r} θ_e`, `S = Π_e s_e` and `S_r = S · Π_{e∈E_r} θ_e²/s_e`,
//! the one-vs-all EC² weight of region `r` is
//!
//! ```text
//! w_r = Mass² · ½ (1 − p_r² − (S − S_r)),   Mass = Π_{observed e} P(x_e = o_e)
//! ```
//!
//! which the enumeration tests check against [`crate::ec2`] on all `2^|E|`
//! worlds. Everything here is `O(|E| + Σ_r |E_r|)` per belief.

use crate::bits::BitSet;
use crate::ec2::{log_sum_exp, pick_best, TestScore};
use crate::error::{Error, Result};
use crate::graph::EdgeId;
use crate::oracle::EdgeOracle;
use crate::trace::{EdgeLedger, Record};

/// Edge sets of the candidate paths.
#[derive(Clone, Debug)]
pub struct RegionSpec {
    paths: Vec<Vec<EdgeId>>,
    sets: Vec<BitSet>,
    num_edges: usize,
}

impl RegionSpec {
    pub fn new(paths: Vec<Vec<EdgeId>>, num_edges: usize) -> Result<Self> {
        for (r, p) in paths.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::Structural(format!("region {r} has no edges")));
            }
            if let Some(e) = p.iter().find(|&&e| e as usize >= num_edges) {
                return Err(Error::Structural(format!("region {r} uses edge {e} >= {num_edges}")));
            }
        }
        let sets = paths
            .iter()
            .map(|p| BitSet::from_indices(num_edges, p.iter().map(|&e| e as usize)))
            .collect();
        Ok(RegionSpec { paths, sets, num_edges })
    }

    pub fn from_library(library: &[crate::graph::Path], num_edges: usize) -> Result<Self> {
        Self::new(library.iter().map(|p| p.edges.clone()).collect(), num_edges)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn path(&self, r: usize) -> &[EdgeId] {
        &self.paths[r]
    }

    pub fn contains(&self, r: usize, e: EdgeId) -> bool {
        self.sets[r].get(e as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliBelief {
    beta: Vec<f64>,
    observed: Vec<Option<bool>>,
}

impl BernoulliBelief {
    /// Prior biases must lie strictly inside `(0, 1)`.
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if let Some((e, b)) = beta.iter().enumerate().find(|(_, &b)| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Contract(format!("bias {b} for edge {e} not in (0, 1)")));
        }
        let n = beta.len();
        Ok(BernoulliBelief {
            beta,
            observed: vec![None; n],
        })
    }

    /// Clamps a bias vector to `[(1−α)/2, 1−(1−α)/2]`.
    pub fn from_bias(theta: &[f64], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Contract(format!("alpha {alpha} not in (0, 1)")));
        }
        let lo = (1.0 - alpha) / 2.0;
        Self::new(theta.iter().map(|&t| t.clamp(lo, 1.0 - lo)).collect())
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn observed(&self, e: EdgeId) -> Option<bool> {
        self.observed[e as usize]
    }

    pub fn observe(&mut self, e: EdgeId, outcome: bool) -> Result<()> {
        let slot = self
            .observed
            .get_mut(e as usize)
            .ok_or_else(|| Error::Contract(format!("edge {e} out of range")))?;
        if slot.is_some() {
            return Err(Error::Contract(format!("edge {e} already observed")));
        }
        *slot = Some(outcome);
        Ok(())
    }

    #[inline]
    pub fn theta(&self, e: EdgeId) -> f64 {
        match self.observed[e as usize] {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => self.beta[e as usize],
        }
    }

    /// `ln Mass`, the log prior probability of the observations.
    pub fn ln_mass(&self) -> f64 {
        self.observed
            .iter()
            .zip(&self.beta)
            .map(|(o, &b)| match o {
                Some(true) => b.ln(),
                Some(false) => (1.0 - b).ln(),
                None => 0.0,
            })
            .sum()
    }

    pub fn unobserved(&self) -> Vec<EdgeId> {
        (0..self.beta.len() as EdgeId).filter(|&e| self.observed[e as usize].is_none()).collect()
    }
}

#[inline]
fn agreement(theta: f64) -> f64 {
    theta * theta + (1.0 - theta) * (1.0 - theta)
}

/// `½ (1 − p² − S (1 − ρ))`, the weight conditioned on the observations.
#[inline]
fn cond_weight(p: f64, s: f64, rho: f64) -> f64 {
    (0.5 * (1.0 - p * p - s * (1.0 - rho))).max(0.0)
}

/// Probability that every edge of region `r` is valid.
pub fn region_prob(belief: &BernoulliBelief, regions: &RegionSpec, r: usize) -> f64 {
    regions.path(r).iter().map(|&e| belief.theta(e)).product()
}

/// Unnormalized one-vs-all EC² weight of region `r` over the implicit
/// product-Bernoulli hypothesis set.
pub fn weight_bernoulli(belief: &BernoulliBelief, regions: &RegionSpec, r: usize) -> f64 {
    let snap = Snapshot::new(belief, regions);
    (2.0 * belief.ln_mass()).exp() * snap.cond_weight(r)
}

/// Per-belief sufficient statistics.
struct Snapshot {
    theta: Vec<f64>,
    /// `Π_{e≠t} s_e` for each edge `t`.
    s_excl: Vec<f64>,
    s_all: f64,
    p: Vec<f64>,
    rho: Vec<f64>,
}

impl Snapshot {
    fn new(belief: &BernoulliBelief, regions: &RegionSpec) -> Self {
        let n = belief.len();
        let theta: Vec<f64> = (0..n as EdgeId).map(|e| belief.theta(e)).collect();
        let s: Vec<f64> = theta.iter().map(|&t| agreement(t)).collect();
        let mut prefix = vec![1.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] * s[i];
        }
        let mut suffix = vec![1.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * s[i];
        }
        let s_excl = (0..n).map(|i| prefix[i] * suffix[i + 1]).collect();
        let p = (0..regions.len())
            .map(|r| regions.path(r).iter().map(|&e| theta[e as usize]).product())
            .collect();
        let rho = (0..regions.len())
            .map(|r| {
                regions
                    .path(r)
                    .iter()
                    .map(|&e| {
                        let t = theta[e as usize];
                        t * t / s[e as usize]
                    })
                    .product()
            })
            .collect();
        Snapshot {
            theta,
            s_excl,
            s_all: prefix[n],
            p,
            rho,
        }
    }

    fn cond_weight(&self, r: usize) -> f64 {
        cond_weight(self.p[r], self.s_all, self.rho[r])
    }

    /// Conditional weights of region `r` after observing `t` = 0 and `t` = 1.
    fn branch_weights(&self, regions: &RegionSpec, r: usize, t: EdgeId) -> [f64; 2] {
        let sx = self.s_excl[t as usize];
        if regions.contains(r, t) {
            let (mut p1, mut rho1) = (1.0, 1.0);
            for &e in regions.path(r) {
                if e != t {
                    let th = self.theta[e as usize];
                    p1 *= th;
                    rho1 *= th * th / agreement(th);
                }
            }
            [cond_weight(0.0, sx, 0.0), cond_weight(p1, sx, rho1)]
        } else {
            let w = cond_weight(self.p[r], sx, self.rho[r]);
            [w, w]
        }
    }
}

/// Scoring state with root weights frozen at the moment it was created.
pub struct BisectSession<'a> {
    regions: &'a RegionSpec,
    eval_cost: &'a [f64],
    included: Vec<bool>,
    root_ln_weight: Vec<f64>,
}

impl<'a> BisectSession<'a> {
    pub fn new(regions: &'a RegionSpec, eval_cost: &'a [f64], root: &BernoulliBelief) -> Result<Self> {
        if root.len() != regions.num_edges() || eval_cost.len() != regions.num_edges() {
            return Err(Error::Structural("belief, costs and regions disagree on |E|".into()));
        }
        let snap = Snapshot::new(root, regions);
        let ln_mass2 = 2.0 * root.ln_mass();
        let w: Vec<f64> = (0..regions.len()).map(|r| snap.cond_weight(r)).collect();
        Ok(BisectSession {
            regions,
            eval_cost,
            included: w.iter().map(|&x| x > 0.0).collect(),
            root_ln_weight: w.iter().map(|&x| ln_mass2 + x.ln()).collect(),
        })
    }

    /// `Π_r w_r(belief) / w_r(root)` over regions with positive root weight.
    pub fn residual(&self, belief: &BernoulliBelief) -> f64 {
        let snap = Snapshot::new(belief, self.regions);
        self.ln_residual(&snap, 2.0 * belief.ln_mass()).exp()
    }

    fn ln_residual(&self, snap: &Snapshot, ln_mass2: f64) -> f64 {
        (0..self.regions.len())
            .filter(|&r| self.included[r])
            .map(|r| ln_mass2 + snap.cond_weight(r).ln() - self.root_ln_weight[r])
            .sum()
    }

    /// Scores each candidate; empty if the residual is already zero.
    pub fn score_tests(&self, belief: &BernoulliBelief, candidates: &[EdgeId]) -> Vec<TestScore> {
        let snap = Snapshot::new(belief, self.regions);
        let live: Vec<usize> = (0..self.regions.len()).filter(|&r| self.included[r]).collect();
        let cur: Vec<f64> = live.iter().map(|&r| snap.cond_weight(r)).collect();
        if cur.iter().any(|&w| w <= 0.0) {
            return Vec::new();
        }
        let ln_cur: Vec<f64> = cur.iter().map(|w| w.ln()).collect();
        let residual = self.ln_residual(&snap, 2.0 * belief.ln_mass()).exp();
        candidates
            .iter()
            .map(|&t| {
                let th = belief.theta(t);
                let probs = [1.0 - th, th];
                let mut terms = [f64::NEG_INFINITY; 2];
                for o in 0..2 {
                    if probs[o] <= 0.0 {
                        continue;
                    }
                    let lp = probs[o].ln();
                    terms[o] = lp;
                    for (i, &r) in live.iter().enumerate() {
                        let w = snap.branch_weights(self.regions, r, t)[o];
                        terms[o] += 2.0 * lp + w.ln() - ln_cur[i];
                    }
                }
                let l = if probs[0] <= 0.0 || probs[1] <= 0.0 {
                    0.0
                } else {
                    log_sum_exp(&terms)
                };
                TestScore::new(t, residual, l, self.eval_cost[t as usize])
            })
            .collect()
    }

    pub fn select_test(&self, belief: &BernoulliBelief, candidates: &[EdgeId]) -> Option<TestScore> {
        pick_best(&self.score_tests(belief, candidates))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BisectEnd {
    Solved(u32),
    AllRegionsDead,
}

/// Lowest region with every edge observed valid, or `AllRegionsDead` if
/// every region holds an observed-invalid edge.
pub fn bisect_status(belief: &BernoulliBelief, regions: &RegionSpec) -> Option<BisectEnd> {
    let mut all_dead = true;
    for r in 0..regions.len() {
        let path = regions.path(r);
        if path.iter().all(|&e| belief.observed(e) == Some(true)) {
            return Some(BisectEnd::Solved(r as u32));
        }
        if !path.iter().any(|&e| belief.observed(e) == Some(false)) {
            all_dead = false;
        }
    }
    all_dead.then_some(BisectEnd::AllRegionsDead)
}

/// Runs to completion, evaluating through `ledger`. Edges the ledger has
/// already evaluated are folded into the belief first, and residual
/// normalization is frozen at that point.
pub fn bisect_with_ledger<O: EdgeOracle>(
    regions: &RegionSpec,
    mut belief: BernoulliBelief,
    ledger: &mut EdgeLedger<'_, O>,
) -> Result<BisectEnd> {
    for (e, st) in ledger.statuses().iter().enumerate() {
        if let Some(v) = st {
            if belief.observed(e as EdgeId).is_none() {
                belief.observe(e as EdgeId, *v)?;
            }
        }
    }
    let eval_cost = ledger.costs().to_vec();
    let session = BisectSession::new(regions, &eval_cost, &belief)?;
    loop {
        if let Some(end) = bisect_status(&belief, regions) {
            return Ok(end);
        }
        let candidates = belief.unobserved();
        let edge = match session.select_test(&belief, &candidates) {
            Some(best) => best.edge,
            None => fallback_edge(&belief, regions)
                .ok_or_else(|| Error::Contract("no edge left to evaluate on a live region".into()))?,
        };
        let outcome = ledger.evaluate(edge)?;
        belief.observe(edge, outcome)?;
    }
}

/// First unobserved edge of the lowest live region.
fn fallback_edge(belief: &BernoulliBelief, regions: &RegionSpec) -> Option<EdgeId> {
    (0..regions.len())
        .filter(|&r| !regions.path(r).iter().any(|&e| belief.observed(e) == Some(false)))
        .find_map(|r| regions.path(r).iter().copied().find(|&e| belief.observed(e).is_none()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisectRun {
    pub records: Vec<Record>,
    pub end: BisectEnd,
}

/// Runs a fresh episode against `oracle`.
pub fn bisect_policy<O: EdgeOracle>(
    regions: &RegionSpec,
    eval_cost: &[f64],
    belief: BernoulliBelief,
    oracle: O,
) -> Result<BisectRun> {
    let mut ledger = EdgeLedger::new(oracle, eval_cost);
    let end = bisect_with_ledger(regions, belief, &mut ledger)?;
    Ok(BisectRun {
        records: ledger.records().to_vec(),
        end,
    })
}
