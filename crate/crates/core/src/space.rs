//! Uniform handling of standard and NAS design spaces: lookup by preset name
//! or config file, sizing, sampling and complexity.

use std::path::Path;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::{sample_standard, space_size, standard_preset, ArchConfig, Family, Regime, StandardSpaceSpec};
use crate::complexity::{nas_complexity, standard_complexity_in, ComplexityReport};
use crate::error::{Error, Result};
use crate::exec::{indexed_rng, Execution};
use crate::nascell::{nas_preset, sample_nas_network, NasNetworkConfig, NasSpaceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignSpace {
    Standard(StandardSpaceSpec),
    Nas(NasSpaceSpec),
}

/// One sampled architecture from either kind of space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Standard(ArchConfig),
    Nas(NasNetworkConfig),
}

impl Architecture {
    pub fn complexity(&self, regime: Regime) -> Result<ComplexityReport> {
        let (res, classes) = (regime.input_resolution(), regime.num_classes());
        match self {
            Architecture::Standard(a) => standard_complexity_in(a, regime, res, classes),
            Architecture::Nas(n) => nas_complexity(n, regime, res, classes),
        }
    }

    /// Family label, `"nas"` for cell-based networks.
    pub fn family_name(&self) -> String {
        match self {
            Architecture::Standard(a) => a.family.to_string(),
            Architecture::Nas(_) => "nas".into(),
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            Architecture::Standard(a) => Some(a.family),
            Architecture::Nas(_) => None,
        }
    }
}

impl DesignSpace {
    pub fn preset(name: &str) -> Option<Self> {
        standard_preset(name)
            .map(DesignSpace::Standard)
            .or_else(|| nas_preset(name).map(DesignSpace::Nas))
    }

    /// Reads a TOML space definition with `kind = "standard"` or `"nas"`.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        // syntax errors are parse errors; well-formed TOML that does not
        // describe a valid space is a config error
        let value: toml::Value =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {}", path.display(), e.message())))?;
        let space: DesignSpace = value
            .try_into()
            .map_err(|e| Error::InvalidConfig(format!("{}: {}", path.display(), e.message())))?;
        space.validate()?;
        Ok(space)
    }

    /// A preset name, or else a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(s) = Self::preset(name_or_path) {
            return Ok(s);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_toml_file(path);
        }
        Err(Error::InvalidConfig(format!(
            "`{name_or_path}` is neither a preset nor a config file"
        )))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DesignSpace::Standard(s) => s.validate(),
            DesignSpace::Nas(s) => s.validate(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            DesignSpace::Standard(s) => &s.name,
            DesignSpace::Nas(s) => &s.name,
        }
    }

    pub fn regime(&self) -> Regime {
        match self {
            DesignSpace::Standard(s) => s.regime,
            DesignSpace::Nas(s) => s.regime,
        }
    }

    /// Number of distinct architectures (networks, for NAS spaces).
    pub fn size(&self) -> BigUint {
        match self {
            DesignSpace::Standard(s) => space_size(s),
            DesignSpace::Nas(s) => s.network_count(),
        }
    }

    /// Number of distinct cells, for NAS spaces.
    pub fn cell_count(&self) -> Option<BigUint> {
        match self {
            DesignSpace::Standard(_) => None,
            DesignSpace::Nas(s) => Some(s.cell_count()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Architecture> {
        match self {
            DesignSpace::Standard(s) => {
                s.validate()?;
                Ok(Architecture::Standard(sample_standard(s, rng)))
            }
            DesignSpace::Nas(s) => sample_nas_network(s, rng).map(Architecture::Nas),
        }
    }

    /// `n` architectures, item `i` drawn from generator `(seed, i)`.
    pub fn sample_batch(&self, n: usize, seed: u64, exec: Execution) -> Result<Vec<Architecture>> {
        self.validate()?;
        exec.map_indexed(n, |i| self.sample(&mut indexed_rng(seed, i as u64)))
            .into_iter()
            .collect()
    }
}
