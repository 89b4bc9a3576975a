//! Paired normalized cost with a percentile bootstrap interval.
//!
//! The statistic is `mean_h (cost_alg(h) / cost_ref(h) − 1)` over worlds
//! present in both runs. Resamples draw worlds with replacement from the
//! world-index-sorted pair list using the `bootstrap` stream; the interval
//! is the 2.5 / 97.5 percentile pair (linear interpolation between order
//! statistics).

use rand::Rng;
use serde::{Deserialize, Serialize};

use lazydrd_core::rng;
use lazydrd_core::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCost {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub pairs: usize,
    /// Worlds dropped because the reference cost was zero.
    pub excluded_zero_ref: Vec<usize>,
}

/// `alg` and `reference` are `(world index, cost)` lists; only worlds in
/// both are paired.
pub fn normalized_cost(
    alg: &[(usize, f64)],
    reference: &[(usize, f64)],
    resamples: usize,
    seed: u64,
) -> Result<NormalizedCost> {
    let mut a = alg.to_vec();
    let mut r = reference.to_vec();
    a.sort_by_key(|p| p.0);
    r.sort_by_key(|p| p.0);
    let mut ratios = Vec::new();
    let mut excluded = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < r.len() {
        match a[i].0.cmp(&r[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if r[j].1 > 0.0 {
                    ratios.push(a[i].1 / r[j].1 - 1.0);
                } else {
                    excluded.push(a[i].0);
                }
                i += 1;
                j += 1;
            }
        }
    }
    if ratios.len() < 2 {
        return Err(Error::Contract(format!("need at least 2 paired worlds, have {}", ratios.len())));
    }
    if resamples == 0 {
        return Err(Error::Contract("bootstrap needs at least one resample".into()));
    }
    let n = ratios.len();
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let mut g = rng::stream(seed, rng::BOOTSTRAP, 0);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| ratios[g.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok(NormalizedCost {
        mean,
        low: quantile(&stats, 0.025),
        high: quantile(&stats, 0.975),
        pairs: n,
        excluded_zero_ref: excluded,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
