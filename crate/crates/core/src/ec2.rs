//! Greedy decision-region determination over an explicit hypothesis
//! database.
//!
//! Each library path `r` induces a "region vs. singletons" equivalence-class
//! problem whose EC² weight is the prior mass on pairs of surviving
//! hypotheses that lie in different classes. The Noisy-OR residual is the
//! product over regions of the weight ratio to the root, and tests are
//! chosen greedily by expected residual reduction per unit cost.
//!
//! Candidate scores are ranked in log space (see [`TestScore`]) so that
//! products over hundreds of regions neither underflow nor collapse
//! distinct candidates into floating-point ties.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bits::{BitMatrix, BitSet};
use crate::error::{Error, Result};
use crate::graph::EdgeId;
use crate::oracle::EdgeOracle;
use crate::trace::{EdgeLedger, Record};

/// Below this many hypothesis-candidate products scoring stays sequential.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    /// `P(h) = 1/N`; weights are computed from exact integer counts.
    Uniform,
    Weighted(Vec<f64>),
}

/// Hypotheses (rows) with their test outcomes and region membership.
#[derive(Clone, Debug)]
pub struct DrdProblem {
    n: usize,
    outcome_cols: Vec<BitSet>,
    region_cols: Vec<BitSet>,
    eval_cost: Vec<f64>,
    prior: Prior,
    uniform_weight: f64,
    root_weights: Vec<f64>,
    included: Vec<bool>,
    root_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionSpace {
    pub active: BitSet,
    pub observed: BTreeMap<EdgeId, bool>,
}

impl VersionSpace {
    pub fn active_count(&self) -> usize {
        self.active.count_ones()
    }

    pub fn is_observed(&self, e: EdgeId) -> bool {
        self.observed.contains_key(&e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveState {
    Solved(u32),
    AllRegionsDead { off_database: bool },
    Unsolved,
}

/// Ranking data for one candidate test.
///
/// `log_expected_ratio` is `ln E_o[Π_r w_r(V|o) / w_r(V)]`, zero for a test
/// that cannot change the version space. Candidates are ranked by
/// `ln(1 − e^L) − ln c(t)` (descending), then `L` (ascending), then edge id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestScore {
    pub edge: EdgeId,
    /// `(residual(V) − E[residual(V|o)]) / c(t)`.
    pub score: f64,
    pub log_expected_ratio: f64,
    pub(crate) key: f64,
}

impl TestScore {
    pub(crate) fn new(edge: EdgeId, residual: f64, log_expected_ratio: f64, cost: f64) -> Self {
        let l = log_expected_ratio.min(0.0);
        let gain = -l.exp_m1();
        TestScore {
            edge,
            score: residual * gain / cost,
            log_expected_ratio: l,
            key: (-l.exp()).ln_1p() - cost.ln(),
        }
    }

    pub fn useful(&self) -> bool {
        self.log_expected_ratio < 0.0
    }

    /// Whether `self` ranks strictly ahead of `other`.
    pub(crate) fn beats(&self, other: &TestScore) -> bool {
        use std::cmp::Ordering::*;
        match self.key.total_cmp(&other.key) {
            Greater => true,
            Less => false,
            Equal => match self.log_expected_ratio.total_cmp(&other.log_expected_ratio) {
                Less => true,
                Greater => false,
                Equal => self.edge < other.edge,
            },
        }
    }
}

/// Best useful candidate, or `None` if no candidate can reduce the residual.
pub(crate) fn pick_best(scores: &[TestScore]) -> Option<TestScore> {
    let mut best: Option<TestScore> = None;
    for s in scores.iter().filter(|s| s.useful()) {
        if best.as_ref().is_none_or(|b| s.beats(b)) {
            best = Some(*s);
        }
    }
    best
}

/// `ln Σ_o exp(terms[o])`, ignoring `-inf` terms.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// One-vs-all EC² weight from region mass `a`, outside mass `b` and
/// outside squared mass `b_sq`: `½((a+b)² − a² − b_sq)`.
#[inline]
pub fn ec2_weight(a: f64, b: f64, b_sq: f64) -> f64 {
    a * b + (0.5 * (b * b - b_sq)).max(0.0)
}

/// Integer form of [`ec2_weight`] for unit weights.
#[inline]
fn ec2_pairs(inside: u64, outside: u64) -> u64 {
    inside * outside + outside * outside.saturating_sub(1) / 2
}

impl DrdProblem {
    /// `outcomes` and `membership` hold one row per hypothesis.
    pub fn new(outcomes: &BitMatrix, membership: &BitMatrix, eval_cost: Vec<f64>, prior: Prior) -> Result<Self> {
        let n = outcomes.n_rows();
        if membership.n_rows() != n {
            return Err(Error::Structural(format!(
                "{n} outcome rows but {} membership rows",
                membership.n_rows()
            )));
        }
        if eval_cost.len() != outcomes.n_cols() {
            return Err(Error::Structural("eval_cost length != number of tests".into()));
        }
        if let Prior::Weighted(w) = &prior {
            if w.len() != n || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Structural("prior weights must be N nonnegative reals".into()));
            }
        }
        let mut p = DrdProblem {
            n,
            outcome_cols: outcomes.columns(),
            region_cols: membership.columns(),
            eval_cost,
            prior,
            uniform_weight: if n > 0 { 1.0 / n as f64 } else { 0.0 },
            root_weights: Vec::new(),
            included: Vec::new(),
            root_mass: 0.0,
        };
        let root = p.root();
        p.root_weights = p.region_weights(&root.active);
        p.included = p.root_weights.iter().map(|&w| w > 0.0).collect();
        p.root_mass = p.mass(&root.active);
        Ok(p)
    }

    /// Problem over a subset of dataset worlds (e.g. the training split),
    /// uniform prior, hypotheses renumbered in the given order.
    pub fn from_worlds(ds: &crate::dataset::Dataset, worlds: &[usize]) -> Result<Self> {
        let pick = |m: &BitMatrix| BitMatrix::from_rows(m.n_cols(), worlds.iter().map(|&h| m.row(h).clone()).collect());
        Self::new(&pick(&ds.worlds), &pick(&ds.membership), ds.graph.eval_costs(), Prior::Uniform)
    }

    pub fn num_hypotheses(&self) -> usize {
        self.n
    }

    pub fn num_tests(&self) -> usize {
        self.outcome_cols.len()
    }

    pub fn num_regions(&self) -> usize {
        self.region_cols.len()
    }

    pub fn eval_cost(&self) -> &[f64] {
        &self.eval_cost
    }

    pub fn root_weights(&self) -> &[f64] {
        &self.root_weights
    }

    pub fn root_mass(&self) -> f64 {
        self.root_mass
    }

    pub fn outcome(&self, h: usize, t: EdgeId) -> bool {
        self.outcome_cols[t as usize].get(h)
    }

    pub fn in_region(&self, h: usize, r: usize) -> bool {
        self.region_cols[r].get(h)
    }

    pub fn root(&self) -> VersionSpace {
        VersionSpace {
            active: BitSet::ones(self.n),
            observed: BTreeMap::new(),
        }
    }

    /// Total prior mass of a hypothesis set.
    pub fn mass(&self, set: &BitSet) -> f64 {
        match &self.prior {
            Prior::Uniform => set.count_ones() as f64 * self.uniform_weight,
            Prior::Weighted(w) => set.iter_ones().map(|h| w[h]).sum(),
        }
    }

    /// EC² weight of every region's one-vs-all problem restricted to `set`.
    fn region_weights(&self, set: &BitSet) -> Vec<f64> {
        match &self.prior {
            Prior::Uniform => {
                let n = set.count_ones() as u64;
                let u2 = self.uniform_weight * self.uniform_weight;
                self.region_cols
                    .iter()
                    .map(|rc| {
                        let a = set.and_count(rc) as u64;
                        ec2_pairs(a, n - a) as f64 * u2
                    })
                    .collect()
            }
            Prior::Weighted(w) => {
                let m = self.region_cols.len();
                let (mut a, mut b, mut bsq) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
                for h in set.iter_ones() {
                    let wh = w[h];
                    for r in 0..m {
                        if self.region_cols[r].get(h) {
                            a[r] += wh;
                        } else {
                            b[r] += wh;
                            bsq[r] += wh * wh;
                        }
                    }
                }
                (0..m).map(|r| ec2_weight(a[r], b[r], bsq[r])).collect()
            }
        }
    }

    /// EC² weight of region `r`'s one-vs-all problem over the active set.
    pub fn weight_ec(&self, vs: &VersionSpace, r: usize) -> f64 {
        let set = &vs.active;
        let rc = &self.region_cols[r];
        match &self.prior {
            Prior::Uniform => {
                let n = set.count_ones() as u64;
                let a = set.and_count(rc) as u64;
                ec2_pairs(a, n - a) as f64 * self.uniform_weight * self.uniform_weight
            }
            Prior::Weighted(w) => {
                let (mut a, mut b, mut bsq) = (0.0, 0.0, 0.0);
                for h in set.iter_ones() {
                    if rc.get(h) {
                        a += w[h];
                    } else {
                        b += w[h];
                        bsq += w[h] * w[h];
                    }
                }
                ec2_weight(a, b, bsq)
            }
        }
    }

    /// `Π_r w_r(V) / w_r(root)` over regions with positive root weight.
    pub fn residual(&self, vs: &VersionSpace) -> f64 {
        self.residual_from(&self.region_weights(&vs.active))
    }

    fn residual_from(&self, weights: &[f64]) -> f64 {
        let mut v = 1.0;
        for r in 0..weights.len() {
            if self.included[r] {
                v *= weights[r] / self.root_weights[r];
            }
        }
        v
    }

    /// Filters the active set by an observed outcome.
    pub fn observe(&self, vs: &VersionSpace, t: EdgeId, outcome: bool) -> Result<VersionSpace> {
        if t as usize >= self.num_tests() {
            return Err(Error::Contract(format!("test {t} out of range")));
        }
        if vs.observed.contains_key(&t) {
            return Err(Error::Contract(format!("test {t} already observed")));
        }
        let mut next = vs.clone();
        next.active = self.filter(&vs.active, t, outcome);
        next.observed.insert(t, outcome);
        Ok(next)
    }

    fn filter(&self, set: &BitSet, t: EdgeId, outcome: bool) -> BitSet {
        let col = &self.outcome_cols[t as usize];
        if outcome {
            set.and(col)
        } else {
            set.and_not(col)
        }
    }

    pub fn is_solved(&self, vs: &VersionSpace) -> SolveState {
        if vs.active.none() {
            return SolveState::AllRegionsDead { off_database: true };
        }
        if let Some(r) = self.region_cols.iter().position(|rc| vs.active.is_subset(rc)) {
            return SolveState::Solved(r as u32);
        }
        if self.region_cols.iter().all(|rc| vs.active.and_count(rc) == 0) {
            return SolveState::AllRegionsDead { off_database: false };
        }
        SolveState::Unsolved
    }

    /// Active mass as a fraction of the root mass.
    pub fn active_fraction(&self, vs: &VersionSpace) -> f64 {
        if self.root_mass > 0.0 {
            self.mass(&vs.active) / self.root_mass
        } else {
            0.0
        }
    }

    /// Scores every candidate. Returns an empty list if the current state
    /// has zero residual (some included region already has zero weight).
    pub fn score_tests(&self, vs: &VersionSpace, candidates: &[EdgeId]) -> Vec<TestScore> {
        let cur = self.region_weights(&vs.active);
        if (0..cur.len()).any(|r| self.included[r] && cur[r] <= 0.0) {
            return Vec::new();
        }
        let residual = self.residual_from(&cur);
        let ln_cur: Vec<f64> = cur.iter().map(|w| w.ln()).collect();
        let score_one = |&t: &EdgeId| {
            let l = self.log_expected_ratio(vs, t, &ln_cur);
            TestScore::new(t, residual, l, self.eval_cost[t as usize])
        };
        if candidates.len() * self.n >= PAR_THRESHOLD {
            candidates.par_iter().map(score_one).collect()
        } else {
            candidates.iter().map(score_one).collect()
        }
    }

    fn log_expected_ratio(&self, vs: &VersionSpace, t: EdgeId, ln_cur: &[f64]) -> f64 {
        let col = &self.outcome_cols[t as usize];
        let mut terms = [f64::NEG_INFINITY; 2];
        match &self.prior {
            Prior::Uniform => {
                let n = vs.active.count_ones() as u64;
                let n1 = vs.active.and_count(col) as u64;
                if n1 == 0 || n1 == n {
                    return 0.0;
                }
                let ln_n = (n as f64).ln();
                let mut acc = [((n - n1) as f64).ln() - ln_n, (n1 as f64).ln() - ln_n];
                for (r, rc) in self.region_cols.iter().enumerate() {
                    if !self.included[r] {
                        continue;
                    }
                    let a = vs.active.and_count(rc) as u64;
                    let a1 = vs.active.and3_count(col, rc) as u64;
                    let a0 = a - a1;
                    let n0 = n - n1;
                    let k = [ec2_pairs(a0, n0 - a0), ec2_pairs(a1, n1 - a1)];
                    let u2 = self.uniform_weight * self.uniform_weight;
                    for o in 0..2 {
                        acc[o] += (k[o] as f64 * u2).ln() - ln_cur[r];
                    }
                }
                terms = acc;
            }
            Prior::Weighted(_) => {
                let mass = self.mass(&vs.active);
                for (o, slot) in terms.iter_mut().enumerate() {
                    let branch = self.filter(&vs.active, t, o == 1);
                    let bm = self.mass(&branch);
                    if bm <= 0.0 {
                        continue;
                    }
                    if branch == vs.active {
                        return 0.0;
                    }
                    let w = self.region_weights(&branch);
                    let mut acc = (bm / mass).ln();
                    for r in 0..w.len() {
                        if self.included[r] {
                            acc += w[r].ln() - ln_cur[r];
                        }
                    }
                    *slot = acc;
                }
            }
        }
        log_sum_exp(&terms)
    }

    /// Greedy choice among `candidates`; `None` means no candidate has a
    /// positive expected gain.
    pub fn select_test(&self, vs: &VersionSpace, candidates: &[EdgeId]) -> Option<TestScore> {
        pick_best(&self.score_tests(vs, candidates))
    }

    /// Unobserved tests, in increasing id order.
    pub fn unobserved(&self, vs: &VersionSpace) -> Vec<EdgeId> {
        (0..self.num_tests() as EdgeId).filter(|t| !vs.observed.contains_key(t)).collect()
    }

    /// Fraction of active hypotheses with outcome 1, per test.
    pub fn valid_fractions(&self, vs: &VersionSpace) -> Vec<f64> {
        let n = vs.active.count_ones();
        self.outcome_cols
            .iter()
            .map(|c| if n == 0 { f64::NAN } else { vs.active.and_count(c) as f64 / n as f64 })
            .collect()
    }

    /// Lowest region holding at least one active hypothesis.
    pub fn first_live_region(&self, active: &BitSet) -> Option<u32> {
        self.region_cols
            .iter()
            .position(|rc| active.and_count(rc) > 0)
            .map(|r| r as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandoffCause {
    Threshold,
    NoUsefulTest,
    OffDatabase,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DirectEnd {
    Solved(u32),
    AllRegionsDead,
    Handoff { vs: VersionSpace, cause: HandoffCause },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectRun {
    pub records: Vec<Record>,
    pub end: DirectEnd,
}

/// Runs the greedy policy against a world until the database decides the
/// episode or control must pass on: the active fraction drops to `eta`, no
/// test is useful, or the world contradicts every hypothesis.
pub fn direct_policy<O: EdgeOracle>(problem: &DrdProblem, oracle: O, eta: f64) -> Result<DirectRun> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Contract(format!("eta {eta} outside [0, 1]")));
    }
    let mut ledger = EdgeLedger::new(oracle, problem.eval_cost());
    let mut vs = problem.root();
    let end = loop {
        if vs.active.none() {
            break DirectEnd::Handoff {
                vs,
                cause: HandoffCause::OffDatabase,
            };
        }
        match problem.is_solved(&vs) {
            SolveState::Solved(r) => break DirectEnd::Solved(r),
            SolveState::AllRegionsDead { .. } => break DirectEnd::AllRegionsDead,
            SolveState::Unsolved => {}
        }
        if problem.active_fraction(&vs) <= eta {
            break DirectEnd::Handoff {
                vs,
                cause: HandoffCause::Threshold,
            };
        }
        let Some(best) = problem.select_test(&vs, &problem.unobserved(&vs)) else {
            break DirectEnd::Handoff {
                vs,
                cause: HandoffCause::NoUsefulTest,
            };
        };
        let outcome = ledger.evaluate(best.edge)?;
        vs = problem.observe(&vs, best.edge, outcome)?;
    };
    Ok(DirectRun {
        records: ledger.records().to_vec(),
        end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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

    /// h1, h2, h3; R1 = {h1, h2}, R2 = {h2, h3}; test 0 has column (1,0,0),
    /// test 1 is constant.
    fn three() -> DrdProblem {
        let theta = matrix(&[&[1, 1], &[0, 1], &[0, 1]]);
        let member = matrix(&[&[1, 0], &[1, 1], &[0, 1]]);
        DrdProblem::new(&theta, &member, vec![1.0, 1.0], Prior::Uniform).unwrap()
    }

    fn with_active(p: &DrdProblem, idx: &[usize]) -> VersionSpace {
        VersionSpace {
            active: BitSet::from_indices(p.num_hypotheses(), idx.iter().copied()),
            observed: BTreeMap::new(),
        }
    }

    #[test]
    fn weight_ec_examples() {
        // four hypotheses, one region; vary how many are inside it
        let theta = matrix(&[&[0], &[0], &[0], &[0]]);
        let cases: [(&[u8], f64); 3] = [(&[1, 1, 1, 1], 0.0), (&[0, 0, 0, 0], 0.375), (&[1, 1, 0, 0], 0.3125)];
        for (member, expect) in cases {
            let m = matrix(&member.iter().map(std::slice::from_ref).collect::<Vec<_>>());
            let p = DrdProblem::new(&theta, &m, vec![1.0], Prior::Uniform).unwrap();
            assert!((p.weight_ec(&p.root(), 0) - expect).abs() < 1e-15, "{member:?}");
            let pw = DrdProblem::new(&theta, &m, vec![1.0], Prior::Weighted(vec![0.25; 4])).unwrap();
            assert!((pw.weight_ec(&pw.root(), 0) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn three_hypothesis_instance() {
        let p = three();
        assert!((p.root_weights()[0] - 2.0 / 9.0).abs() < 1e-15);
        assert!((p.root_weights()[1] - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(p.residual(&p.root()), 1.0);

        let vs = with_active(&p, &[1, 2]);
        assert!((p.weight_ec(&vs, 0) - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(p.weight_ec(&vs, 1), 0.0);
        assert_eq!(p.residual(&vs), 0.0);

        let best = p.select_test(&p.root(), &[0, 1]).unwrap();
        assert_eq!(best.edge, 0);
        assert_eq!(best.score, 1.0);
        let scores = p.score_tests(&p.root(), &[0, 1]);
        assert_eq!(scores[1].score, 0.0);
        assert!(!scores[1].useful());
    }

    #[test]
    fn observe_filters_and_rejects_repeats() {
        let p = three();
        let root = p.root();
        let vs = p.observe(&root, 1, true).unwrap();
        assert_eq!(vs.active, root.active);
        let vs = p.observe(&root, 0, true).unwrap();
        assert_eq!(vs.active, BitSet::from_indices(3, [0]));
        assert!(matches!(p.observe(&vs, 0, true), Err(Error::Contract(_))));
        let dead = p.observe(&root, 1, false).unwrap();
        assert!(dead.active.none());
        assert_eq!(p.is_solved(&dead), SolveState::AllRegionsDead { off_database: true });
    }

    #[test]
    fn is_solved_cases() {
        // h0 in R1 and R3, h1 in R0 and R3 only, h2 in R3, h3 in none
        let theta = matrix(&[&[0], &[0], &[0], &[0]]);
        let member = matrix(&[&[0, 1, 0, 1], &[1, 0, 0, 1], &[0, 0, 0, 1], &[0, 0, 0, 0]]);
        let p = DrdProblem::new(&theta, &member, vec![1.0], Prior::Uniform).unwrap();
        assert_eq!(p.is_solved(&with_active(&p, &[0, 1, 2])), SolveState::Solved(3));
        assert_eq!(p.is_solved(&with_active(&p, &[0])), SolveState::Solved(1));
        assert_eq!(p.is_solved(&with_active(&p, &[1, 3])), SolveState::Unsolved);
        assert_eq!(
            p.is_solved(&with_active(&p, &[3])),
            SolveState::AllRegionsDead { off_database: false }
        );
    }

    #[test]
    fn equal_scores_pick_lowest_edge() {
        // tests 0 and 1 have identical columns
        let theta = matrix(&[&[1, 1], &[0, 0], &[0, 0]]);
        let member = matrix(&[&[1, 0], &[1, 1], &[0, 1]]);
        let p = DrdProblem::new(&theta, &member, vec![1.0, 1.0], Prior::Uniform).unwrap();
        assert_eq!(p.select_test(&p.root(), &[1, 0]).unwrap().edge, 0);
    }

    #[test]
    fn direct_policy_examples() {
        let p = three();
        let h2 = World(BitSet::from_bools(&[false, true]));
        let run = direct_policy(&p, &h2, 0.0).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].edge, 0);
        assert_eq!(run.end, DirectEnd::Solved(1));

        let run = direct_policy(&p, &h2, 1.0).unwrap();
        assert!(run.records.is_empty());
        assert!(matches!(run.end, DirectEnd::Handoff { cause: HandoffCause::Threshold, ref vs } if *vs == p.root()));

        // selected tests always split the active set, so even a world outside
        // the database ends at a nonempty leaf
        let off = World(BitSet::from_bools(&[false, false]));
        let run = direct_policy(&p, &off, 0.0).unwrap();
        assert_eq!(run.end, DirectEnd::Solved(1));
    }
}
