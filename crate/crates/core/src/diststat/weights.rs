use serde::{Deserialize, Serialize};

use super::edf::{Sample, WeightedPool, WeightedSample};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinScale {
    #[default]
    Log,
    Linear,
}

/// `k` equal-width complexity bins over `[lo, hi)`, in log or linear space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    #[serde(default)]
    pub scale: BinScale,
}

impl Binning {
    pub fn new(lo: f64, hi: f64, bins: usize, scale: BinScale) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidConfig("bin count must be at least 1".into()));
        }
        if lo.is_nan() || hi.is_nan() || lo >= hi || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!("bad complexity range {lo}:{hi}")));
        }
        if scale == BinScale::Log && lo <= 0.0 {
            return Err(Error::InvalidConfig("log bins need a positive lower bound".into()));
        }
        Ok(Binning { lo, hi, bins, scale })
    }

    pub fn log(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::new(lo, hi, bins, BinScale::Log)
    }

    /// Smallest range covering every sample, with `hi` nudged up so the
    /// largest value falls inside the half-open range.
    pub fn covering(samples: &[Sample], bins: usize, scale: BinScale) -> Result<Self> {
        let lo = samples.iter().map(|s| s.complexity).fold(f64::INFINITY, f64::min);
        let hi = samples.iter().map(|s| s.complexity).fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() {
            return Err(Error::EmptyPool);
        }
        let hi = if hi > lo { hi * (1.0 + 1e-9) } else { lo * 2.0 + 1.0 };
        Self::new(lo, hi, bins, scale)
    }

    fn map(&self, x: f64) -> f64 {
        match self.scale {
            BinScale::Log => x.ln(),
            BinScale::Linear => x,
        }
    }

    fn unmap(&self, x: f64) -> f64 {
        match self.scale {
            BinScale::Log => x.exp(),
            BinScale::Linear => x,
        }
    }

    /// Bin holding `complexity`, or `None` outside `[lo, hi)`.
    pub fn bin_index(&self, complexity: f64) -> Option<usize> {
        if !(complexity >= self.lo && complexity < self.hi) {
            return None;
        }
        let (a, b) = (self.map(self.lo), self.map(self.hi));
        let pos = (self.map(complexity) - a) / (b - a) * self.bins as f64;
        Some((pos.floor().max(0.0) as usize).min(self.bins - 1))
    }

    /// The `bins + 1` bin boundaries, `edges()[0] == lo` and the last equal to `hi`.
    pub fn edges(&self) -> Vec<f64> {
        let (a, b) = (self.map(self.lo), self.map(self.hi));
        (0..=self.bins)
            .map(|j| match j {
                0 => self.lo,
                j if j == self.bins => self.hi,
                j => self.unmap(a + (b - a) * j as f64 / self.bins as f64),
            })
            .collect()
    }
}

/// Reweights `samples` so their complexity distribution is uniform across
/// the nonempty bins of `binning`.
///
/// Members of bin `j` get `1 / (k' m_j)` where `m_j` is the bin's population
/// and `k'` the number of nonempty bins. Out-of-range samples keep weight 0.
pub fn normalize_weights(samples: &[Sample], binning: &Binning) -> Result<WeightedPool> {
    let bins: Vec<Option<usize>> = samples.iter().map(|s| binning.bin_index(s.complexity)).collect();
    let mut counts = vec![0usize; binning.bins];
    for b in bins.iter().flatten() {
        counts[*b] += 1;
    }
    let nonempty = counts.iter().filter(|&&c| c > 0).count();
    if nonempty == 0 {
        return Err(Error::EmptyRange {
            lo: binning.lo,
            hi: binning.hi,
        });
    }
    let records = samples
        .iter()
        .zip(&bins)
        .map(|(s, b)| WeightedSample {
            error: s.error,
            complexity: s.complexity,
            weight: b.map_or(0.0, |b| 1.0 / (nonempty * counts[b]) as f64),
        })
        .collect();
    WeightedPool::new(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean: Option<f64>,
    /// Population standard deviation; `None` for an empty bin.
    pub std: Option<f64>,
}

/// Unweighted error statistics computed independently inside each bin.
pub fn bucket_stats(samples: &[Sample], binning: &Binning) -> Vec<BucketStat> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); binning.bins];
    for s in samples {
        if let Some(b) = binning.bin_index(s.complexity) {
            groups[b].push(s.error);
        }
    }
    let edges = binning.edges();
    groups
        .into_iter()
        .enumerate()
        .map(|(bin, errs)| {
            let (mean, std) = if errs.is_empty() {
                (None, None)
            } else {
                let n = errs.len() as f64;
                let mean = errs.iter().sum::<f64>() / n;
                let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
                (Some(mean), Some(var.sqrt()))
            };
            BucketStat {
                bin,
                lo: edges[bin],
                hi: edges[bin + 1],
                count: errs.len(),
                mean,
                std,
            }
        })
        .collect()
}
