use serde::{Deserialize, Serialize};

use super::edf::{edf, edf_area, EdfCurve, Sample, WeightedPool};
use super::ks::{ks_pvalue_effective, ks_statistic};
use super::weights::{normalize_weights, Binning};
use crate::error::Result;

/// Distribution-level comparison of two populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub d: f64,
    pub p_value: f64,
    /// Effective sample sizes. Equal to the record counts for unit weights,
    /// smaller once weights are uneven.
    pub n_eff_a: f64,
    pub n_eff_b: f64,
    pub area_a: Option<f64>,
    pub area_b: Option<f64>,
    #[serde(skip)]
    pub edf_a: Option<EdfCurve>,
    #[serde(skip)]
    pub edf_b: Option<EdfCurve>,
}

fn weighted(samples: &[Sample], binning: Option<&Binning>) -> Result<WeightedPool> {
    match binning {
        Some(b) => normalize_weights(samples, b),
        None => WeightedPool::uniform(samples),
    }
}

/// KS statistic, p-value and optional EDF areas for two sample sets,
/// normalized for complexity when `binning` is given.
///
/// Weighted samples enter the p-value through their Kish effective sizes.
pub fn compare(a: &[Sample], b: &[Sample], binning: Option<&Binning>, eps: Option<f64>) -> Result<Comparison> {
    let pa = weighted(a, binning)?;
    let pb = weighted(b, binning)?;
    compare_pools(&pa, &pb, eps)
}

pub fn compare_pools(pa: &WeightedPool, pb: &WeightedPool, eps: Option<f64>) -> Result<Comparison> {
    let fa = edf(pa)?;
    let fb = edf(pb)?;
    let d = ks_statistic(&fa, &fb);
    let (na, nb) = (pa.effective_size(), pb.effective_size());
    Ok(Comparison {
        d,
        p_value: ks_pvalue_effective(d, na * nb / (na + nb)),
        n_eff_a: na,
        n_eff_b: nb,
        area_a: eps.map(|e| edf_area(pa, e)),
        area_b: eps.map(|e| edf_area(pb, e)),
        edf_a: Some(fa),
        edf_b: Some(fb),
    })
}
