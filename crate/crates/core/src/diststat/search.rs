use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::compare::compare;
use super::edf::{EdfCurve, Sample, WeightedPool};
use super::ks::ks_statistic;
use super::weights::Binning;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, indexed_rng, Execution};

pub const MIN_TRIALS: usize = 32;
pub const DEFAULT_REPEATS: usize = 20;

/// Outcome of simulated random search with `m` evaluations per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchResult {
    pub m: usize,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    /// 25th percentile of the per-trial minimum.
    pub lo: f64,
    /// 75th percentile of the per-trial minimum.
    pub hi: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Default trial count for a pool of `n` records: `max(ceil(n / m), 32)`.
pub fn default_trials(n: usize, m: usize) -> usize {
    n.div_ceil(m).max(MIN_TRIALS)
}

/// Draws `m` records per trial, with replacement and proportional to the
/// pool weights, and summarizes the minimum error across trials.
pub fn random_search_sim(
    pool: &WeightedPool,
    m: usize,
    trials: Option<usize>,
    seed: u64,
    exec: Execution,
) -> Result<RandomSearchResult> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    let trials = trials.unwrap_or_else(|| default_trials(pool.len(), m));
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let dist = WeightedIndex::new(pool.weights()).map_err(|_| Error::EmptyPool)?;
    let records = pool.records();
    let mut mins = exec.map_indexed(trials, |t| {
        let mut rng = indexed_rng(seed, t as u64);
        (0..m)
            .map(|_| records[dist.sample(&mut rng)].error)
            .fold(f64::INFINITY, f64::min)
    });
    mins.sort_by(f64::total_cmp);
    let (mean, std) = mean_std(&mins);
    Ok(RandomSearchResult {
        m,
        trials,
        mean,
        std,
        lo: percentile(&mins, 0.25),
        hi: percentile(&mins, 0.75),
    })
}

/// Random search efficiency curve, one point per entry of `ms`. Each point
/// gets its own seed derived from `(seed, m)`.
pub fn random_search_curve(
    pool: &WeightedPool,
    ms: &[usize],
    trials: Option<usize>,
    seed: u64,
    exec: Execution,
) -> Result<Vec<RandomSearchResult>> {
    ms.iter()
        .map(|&m| random_search_sim(pool, m, trials, derive_seed(seed, m as u64), exec))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVsDistribution {
    pub trials: usize,
    /// Fraction of trials where the larger set's best error is strictly lower.
    pub large_wins: f64,
    /// Fraction of trials where the KS test does not reject at 0.05.
    pub same_distribution: f64,
}

/// Compares a best-model point estimate against a distribution test on two
/// disjoint sets of sizes `small` and `large` drawn from the same samples.
///
/// Sets are drawn without replacement. With distinct errors the larger set
/// holds the overall minimum with probability `large / (small + large)`.
/// When `binning` is given both sets are normalized before testing.
pub fn point_vs_distribution(
    samples: &[Sample],
    small: usize,
    large: usize,
    trials: usize,
    binning: Option<&Binning>,
    seed: u64,
    exec: Execution,
) -> Result<PointVsDistribution> {
    if small == 0 || large == 0 || small + large > samples.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot draw disjoint sets of {small} and {large} from {} samples",
            samples.len()
        )));
    }
    let outcomes = exec.map_indexed(trials, |t| -> Result<(bool, bool)> {
        let mut rng = indexed_rng(seed, t as u64);
        let idx = index::sample(&mut rng, samples.len(), small + large).into_vec();
        let a: Vec<Sample> = idx[..small].iter().map(|&i| samples[i]).collect();
        let b: Vec<Sample> = idx[small..].iter().map(|&i| samples[i]).collect();
        let best = |s: &[Sample]| s.iter().map(|x| x.error).fold(f64::INFINITY, f64::min);
        let cmp = compare(&a, &b, binning, None)?;
        Ok((best(&b) < best(&a), cmp.p_value > 0.05))
    });
    let mut wins = 0usize;
    let mut same = 0usize;
    for o in outcomes {
        let (w, s) = o?;
        wins += usize::from(w);
        same += usize::from(s);
    }
    Ok(PointVsDistribution {
        trials,
        large_wins: wins as f64 / trials as f64,
        same_distribution: same as f64 / trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleKs {
    pub n: usize,
    pub repeats: usize,
    pub mean_d: f64,
    /// Standard error of `mean_d` over repeats.
    pub std_err: f64,
}

/// Mean KS distance between the full error EDF and subsamples of each size,
/// drawn without replacement.
pub fn subsample_ks(
    errors: &[f64],
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SubsampleKs>> {
    let full = EdfCurve::from_values(errors)?;
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n > errors.len()) {
        return Err(Error::InvalidConfig(format!(
            "subsample size {n} outside 1..={}",
            errors.len()
        )));
    }
    // one flat job list so small and large sizes share the worker pool
    let ds = exec.map_indexed(sizes.len() * repeats, |job| {
        let n = sizes[job / repeats];
        let mut rng = indexed_rng(derive_seed(seed, n as u64), (job % repeats) as u64);
        let sub: Vec<f64> = index::sample(&mut rng, errors.len(), n)
            .iter()
            .map(|i| errors[i])
            .collect();
        ks_statistic(&full, &EdfCurve::from_values(&sub).expect("nonempty subsample"))
    });
    Ok(sizes
        .iter()
        .zip(ds.chunks(repeats))
        .map(|(&n, d)| {
            let (mean, std) = mean_std(d);
            let std_err = if repeats > 1 {
                std * (repeats as f64 / (repeats - 1) as f64).sqrt() / (repeats as f64).sqrt()
            } else {
                0.0
            };
            SubsampleKs {
                n,
                repeats,
                mean_d: mean,
                std_err,
            }
        })
        .collect())
}
