use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated model reduced to what the statistics need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Error in percent.
    pub error: f64,
    pub complexity: f64,
}

impl Sample {
    pub fn new(error: f64, complexity: f64) -> Self {
        Sample { error, complexity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub error: f64,
    pub complexity: f64,
    pub weight: f64,
}

/// Samples with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPool {
    records: Vec<WeightedSample>,
}

impl WeightedPool {
    /// Normalizes `records` so the weights sum to one.
    pub fn new(mut records: Vec<WeightedSample>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyPool);
        }
        for r in &records {
            if !(0.0..=100.0).contains(&r.error) {
                return Err(Error::InvalidConfig(format!("error {} outside [0, 100]", r.error)));
            }
            if !(r.weight >= 0.0 && r.weight.is_finite()) {
                return Err(Error::InvalidConfig(format!("bad weight {}", r.weight)));
            }
            if r.complexity.is_nan() || r.complexity < 0.0 {
                return Err(Error::InvalidConfig(format!("bad complexity {}", r.complexity)));
            }
        }
        let total: f64 = records.iter().map(|r| r.weight).sum();
        if total <= 0.0 {
            return Err(Error::EmptyPool);
        }
        for r in &mut records {
            r.weight /= total;
        }
        Ok(WeightedPool { records })
    }

    /// Every sample weighted `1/n`.
    pub fn uniform(samples: &[Sample]) -> Result<Self> {
        Self::new(
            samples
                .iter()
                .map(|s| WeightedSample {
                    error: s.error,
                    complexity: s.complexity,
                    weight: 1.0,
                })
                .collect(),
        )
    }

    pub fn records(&self) -> &[WeightedSample] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.error)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.weight)
    }

    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    pub fn effective_size(&self) -> f64 {
        let sq: f64 = self.weights().map(|w| w * w).sum();
        1.0 / sq
    }

    /// Keeps the records at `indices` and renormalizes.
    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(indices.into_iter().map(|i| self.records[i]).collect())
    }
}

/// Right-continuous cumulative steps of a weighted empirical distribution.
///
/// `points[i] = (t, m)` where `m` is the total weight of values `<= t`.
/// [`EdfCurve::eval`] uses strict inequality, so `eval(t)` is the mass of
/// values `< t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfCurve {
    points: Vec<(f64, f64)>,
}

impl EdfCurve {
    fn from_weighted(mut values: Vec<(f64, f64)>) -> Result<Self> {
        values.retain(|&(_, w)| w > 0.0);
        if values.is_empty() {
            return Err(Error::EmptyPool);
        }
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = values.iter().map(|v| v.1).sum();
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for (t, w) in values {
            acc += w;
            match points.last_mut() {
                Some(last) if last.0 == t => last.1 = acc / total,
                _ => points.push((t, acc / total)),
            }
        }
        points.last_mut().unwrap().1 = 1.0;
        Ok(EdfCurve { points })
    }

    /// Unit-weight curve over raw values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_weighted(values.iter().map(|&v| (v, 1.0)).collect())
    }

    /// Fraction of mass strictly below `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.0 < x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].1
        }
    }

    /// `(threshold, mass at or below threshold)` breakpoints.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Weighted error EDF: `F(e) = sum_i w_i [e_i < e]`.
pub fn edf(pool: &WeightedPool) -> Result<EdfCurve> {
    EdfCurve::from_weighted(pool.records.iter().map(|r| (r.error, r.weight)).collect())
}

/// Weighted complexity EDF: `C(c) = sum_i w_i [c_i < c]`.
pub fn complexity_edf(pool: &WeightedPool) -> Result<EdfCurve> {
    EdfCurve::from_weighted(pool.records.iter().map(|r| (r.complexity, r.weight)).collect())
}

/// Normalized area under the error EDF on `[0, eps]`:
/// `1 - sum_i w_i min(1, e_i / eps)`.
pub fn edf_area(pool: &WeightedPool, eps: f64) -> f64 {
    assert!(eps > 0.0, "eps must be positive");
    let used: f64 = pool.records.iter().map(|r| r.weight * (r.error / eps).min(1.0)).sum();
    (1.0 - used).clamp(0.0, 1.0)
}
