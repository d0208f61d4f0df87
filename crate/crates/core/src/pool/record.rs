use std::fmt;

use serde::{Deserialize, Serialize};

use crate::archspace::Regime;
use crate::complexity::{within_ceiling, ComplexityCeiling, ComplexityReport, Metric};
use crate::diststat::Sample;
use crate::error::{Error, Result};
use crate::space::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synthetic,
    External,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Synthetic => "synthetic",
            Source::External => "external",
        })
    }
}

/// One sampled model, evaluated or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub design_space: String,
    #[serde(default)]
    pub regime: Regime,
    pub arch: Architecture,
    pub flops: u64,
    pub params: u64,
    /// Error in percent; absent until evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    pub seed: u64,
    pub source: Source,
    pub run_id: String,
}

/// Identity of a record for duplicate detection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordKey {
    pub design_space: String,
    pub arch: String,
    pub seed: u64,
}

impl ModelRecord {
    /// Unevaluated record with complexity computed from `arch`.
    pub fn new(design_space: &str, regime: Regime, arch: Architecture, seed: u64, run_id: String) -> Result<Self> {
        let c = arch.complexity(regime)?;
        Ok(ModelRecord {
            design_space: design_space.to_string(),
            regime,
            arch,
            flops: c.flops,
            params: c.params,
            error: None,
            seed,
            source: Source::External,
            run_id,
        })
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            design_space: self.design_space.clone(),
            arch: serde_json::to_string(&self.arch).expect("architectures serialize"),
            seed: self.seed,
        }
    }

    pub fn complexity(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Flops => self.flops,
            Metric::Params => self.params,
        }
    }

    /// Recomputes flops and params and checks them against the stored values.
    pub fn verify_complexity(&self) -> Result<()> {
        let c = self.arch.complexity(self.regime)?;
        if (c.flops, c.params) != (self.flops, self.params) {
            return Err(Error::InvalidConfig(format!(
                "stored complexity ({}, {}) differs from recomputed ({}, {})",
                self.flops, self.params, c.flops, c.params
            )));
        }
        Ok(())
    }

    fn report(&self) -> ComplexityReport {
        ComplexityReport {
            flops: self.flops,
            params: self.params,
            breakdown: Vec::new(),
        }
    }
}

/// Records strictly below `ceiling`.
pub fn filter_pool(records: &[ModelRecord], ceiling: &ComplexityCeiling) -> Vec<ModelRecord> {
    records
        .iter()
        .filter(|r| within_ceiling(&r.report(), ceiling))
        .cloned()
        .collect()
}

/// Fails if evaluated records come from both synthetic and external sources.
pub fn check_sources(records: &[ModelRecord]) -> Result<()> {
    let mut seen = records.iter().filter(|r| r.error.is_some()).map(|r| r.source);
    if let Some(first) = seen.next() {
        if seen.any(|s| s != first) {
            return Err(Error::MixedSources);
        }
    }
    Ok(())
}

/// `(error, complexity)` pairs of the evaluated records.
///
/// Unevaluated records are skipped. Mixed sources are an error unless
/// `allow_mixed` is set.
pub fn samples(records: &[ModelRecord], metric: Metric, allow_mixed: bool) -> Result<Vec<Sample>> {
    if !allow_mixed {
        check_sources(records)?;
    }
    let out: Vec<Sample> = records
        .iter()
        .filter_map(|r| r.error.map(|e| Sample::new(e, r.complexity(metric) as f64)))
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(out)
}
