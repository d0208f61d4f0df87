//! Standard-family design spaces: Vanilla, ResNet and ResNeXt.
//!
//! A space is a per-stage set of allowable values for depth, width and (for
//! ResNeXt) bottleneck ratio and group count. Every stage draws its values
//! independently and uniformly.

use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered set of allowable integer values for one hyperparameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridDoc", into = "GridDoc")]
pub struct HyperGrid {
    values: Vec<u32>,
}

/// On-disk form of a grid: either the generating triple or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GridDoc {
    Values { values: Vec<u32> },
    Range { lo: u32, hi: u32, count: usize },
}

impl TryFrom<GridDoc> for HyperGrid {
    type Error = Error;

    fn try_from(doc: GridDoc) -> Result<Self> {
        match doc {
            GridDoc::Values { values } => HyperGrid::from_values(values),
            GridDoc::Range { lo, hi, count } => log_grid(lo, hi, count),
        }
    }
}

impl From<HyperGrid> for GridDoc {
    fn from(grid: HyperGrid) -> Self {
        GridDoc::Values { values: grid.values }
    }
}

impl HyperGrid {
    /// Builds a grid from explicit values, which must be positive and
    /// strictly increasing.
    pub fn from_values(values: Vec<u32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("grid has no values".into()));
        }
        if values[0] == 0 {
            return Err(Error::InvalidConfig("grid values must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "grid values must be strictly increasing: {values:?}"
            )));
        }
        Ok(HyperGrid { values })
    }

    pub fn single(value: u32) -> Result<Self> {
        Self::from_values(vec![value])
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn lo(&self) -> u32 {
        self.values[0]
    }

    pub fn hi(&self) -> u32 {
        *self.values.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: u32) -> bool {
        self.values.binary_search(&v).is_ok()
    }

    /// Uniform draw over the grid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.values[rng.random_range(0..self.values.len())]
    }
}

/// `count` integers from `lo` to `hi`, approximately evenly spaced in log
/// space.
///
/// Values are the rounded geometric sequence `lo * (hi/lo)^(i/(count-1))`.
/// A value that collides with (or falls below) its predecessor is bumped to
/// the next unused integer; if bumping pushes the tail past `hi` the tail is
/// pulled back so the last value is exactly `hi`.
pub fn log_grid(lo: u32, hi: u32, count: usize) -> Result<HyperGrid> {
    if lo == 0 || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "grid range must satisfy 1 <= lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let available = u64::from(hi - lo) + 1;
    if count == 0 || count as u64 > available || (count == 1 && lo != hi) {
        return Err(Error::InfeasibleGrid {
            lo: lo.into(),
            hi: hi.into(),
            count,
            available,
        });
    }
    if count == 1 {
        return HyperGrid::single(lo);
    }

    let ratio = f64::from(hi) / f64::from(lo);
    let steps = (count - 1) as f64;
    let mut values: Vec<u32> = Vec::with_capacity(count);
    for i in 0..count {
        let raw = (f64::from(lo) * ratio.powf(i as f64 / steps)).round() as u32;
        let v = match values.last() {
            Some(&prev) if raw <= prev => prev + 1,
            _ => raw,
        };
        values.push(v);
    }
    values[0] = lo;
    values[count - 1] = hi;
    for i in (0..count - 1).rev() {
        values[i] = values[i].min(values[i + 1] - 1);
    }
    HyperGrid::from_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Vanilla,
    ResNet,
    ResNeXt,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Vanilla => "vanilla",
            Family::ResNet => "resnet",
            Family::ResNeXt => "resnext",
        })
    }
}

/// Input regime a space is instantiated for. Selects stem, resolution and
/// class count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Cifar,
    ImageNet,
}

impl Regime {
    pub fn input_resolution(self) -> u32 {
        match self {
            Regime::Cifar => 32,
            Regime::ImageNet => 224,
        }
    }

    pub fn num_classes(self) -> u32 {
        match self {
            Regime::Cifar => 10,
            Regime::ImageNet => 1000,
        }
    }
}

fn default_stages() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardSpaceSpec {
    pub name: String,
    pub family: Family,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default = "default_stages")]
    pub num_stages: usize,
    pub depth: HyperGrid,
    pub width: HyperGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<HyperGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<HyperGrid>,
}

impl StandardSpaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 {
            return Err(Error::InvalidConfig("num_stages must be positive".into()));
        }
        let grouped = self.family == Family::ResNeXt;
        match (&self.ratio, &self.groups) {
            (Some(_), Some(_)) if grouped => Ok(()),
            (None, None) if !grouped => Ok(()),
            (Some(_), None) | (None, Some(_)) => Err(Error::InvalidConfig(
                "ratio and groups grids must be given together".into(),
            )),
            _ => Err(Error::InvalidConfig(format!(
                "ratio/groups grids are required for resnext and forbidden for {}",
                self.family
            ))),
        }
    }

    /// Number of distinct choices for a single stage.
    pub fn choices_per_stage(&self) -> BigUint {
        let mut n = BigUint::from(self.depth.len()) * self.width.len();
        if let (Some(r), Some(g)) = (&self.ratio, &self.groups) {
            n = n * r.len() * g.len();
        }
        n
    }
}

/// Exact number of architectures in the space.
pub fn space_size(spec: &StandardSpaceSpec) -> BigUint {
    let per_stage = spec.choices_per_stage();
    (0..spec.num_stages).fold(BigUint::from(1u32), |acc, _| acc * &per_stage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageConfig {
    pub depth: u32,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<u32>,
}

impl StageConfig {
    /// Width of the grouped 3x3 conv in a ResNeXt bottleneck:
    /// `round(width / ratio)` raised to a multiple of `groups` (at least
    /// `groups`). `None` for families without bottlenecks.
    pub fn bottleneck_width(&self) -> Option<u32> {
        let (r, g) = (self.ratio?, self.groups?);
        let b = (2 * self.width + r) / (2 * r);
        Some(b.div_ceil(g).max(1) * g)
    }
}

/// One concrete standard-family architecture.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchConfig {
    pub family: Family,
    pub stages: Vec<StageConfig>,
}

impl ArchConfig {
    /// Checks every stage value against the grids of `spec`.
    pub fn conforms_to(&self, spec: &StandardSpaceSpec) -> bool {
        self.family == spec.family
            && self.stages.len() == spec.num_stages
            && self.stages.iter().all(|s| {
                spec.depth.contains(s.depth)
                    && spec.width.contains(s.width)
                    && match (&spec.ratio, &spec.groups, s.ratio, s.groups) {
                        (Some(rg), Some(gg), Some(r), Some(g)) => rg.contains(r) && gg.contains(g),
                        (None, None, None, None) => true,
                        _ => false,
                    }
            })
    }
}

/// Draws one architecture, each stage and hyperparameter independently and
/// uniformly from its grid.
pub fn sample_standard<R: Rng + ?Sized>(spec: &StandardSpaceSpec, rng: &mut R) -> ArchConfig {
    let stages = (0..spec.num_stages)
        .map(|_| {
            let depth = spec.depth.sample(rng);
            let width = spec.width.sample(rng);
            let ratio = spec.ratio.as_ref().map(|g| g.sample(rng));
            let groups = spec.groups.as_ref().map(|g| g.sample(rng));
            StageConfig {
                depth,
                width,
                ratio,
                groups,
            }
        })
        .collect();
    ArchConfig {
        family: spec.family,
        stages,
    }
}

fn grid(lo: u32, hi: u32, count: usize) -> HyperGrid {
    log_grid(lo, hi, count).expect("preset grids are feasible")
}

/// Built-in standard-family presets. Names ending in `-in` are the ImageNet
/// variants with identical grids.
pub fn standard_preset(name: &str) -> Option<StandardSpaceSpec> {
    let (base, regime) = match name.strip_suffix("-in") {
        Some(base) => (base, Regime::ImageNet),
        None => (name, Regime::Cifar),
    };
    let (family, depth, width, ratio, groups) = match base {
        "vanilla" => (Family::Vanilla, grid(1, 24, 9), grid(16, 256, 12), None, None),
        "resnet" => (Family::ResNet, grid(1, 24, 9), grid(16, 256, 12), None, None),
        "resnext-a" => (
            Family::ResNeXt,
            grid(1, 16, 5),
            grid(16, 256, 5),
            Some(grid(1, 4, 3)),
            Some(grid(1, 4, 3)),
        ),
        "resnext-b" => (
            Family::ResNeXt,
            grid(1, 16, 5),
            grid(64, 1024, 5),
            Some(grid(1, 4, 3)),
            Some(grid(1, 16, 5)),
        ),
        _ => return None,
    };
    Some(StandardSpaceSpec {
        name: name.to_string(),
        family,
        regime,
        num_stages: 3,
        depth,
        width,
        ratio,
        groups,
    })
}

pub const STANDARD_PRESETS: &[&str] = &[
    "vanilla",
    "resnet",
    "resnext-a",
    "resnext-b",
    "vanilla-in",
    "resnet-in",
    "resnext-a-in",
    "resnext-b-in",
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_grid() {
        assert_eq!(log_grid(4, 4, 1).unwrap().values(), &[4]);
    }

    #[test]
    fn width_grid_matches_oracle() {
        // Rounded geometric sequence, no collisions.
        let g = log_grid(16, 256, 12).unwrap();
        assert_eq!(g.values(), &[16, 21, 26, 34, 44, 56, 73, 93, 120, 155, 199, 256]);
    }

    #[test]
    fn depth_grid_repairs_low_end_collisions() {
        // Raw rounding gives 1, 1, 2, 3, 5, ...; the duplicates are bumped.
        let g = log_grid(1, 24, 9).unwrap();
        assert_eq!(g.values(), &[1, 2, 3, 4, 5, 7, 11, 16, 24]);
    }

    #[test]
    fn dense_grid_fills_interval() {
        let g = log_grid(1, 9, 9).unwrap();
        assert_eq!(g.values(), &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn infeasible_grids() {
        assert!(matches!(
            log_grid(1, 4, 5),
            Err(Error::InfeasibleGrid { available: 4, .. })
        ));
        assert!(log_grid(1, 4, 1).is_err());
        assert!(log_grid(0, 4, 2).is_err());
        assert!(log_grid(5, 4, 1).is_err());
        assert!(log_grid(1, 4, 0).is_err());
    }

    #[test]
    fn table_sizes() {
        let sizes: Vec<u64> = ["vanilla", "resnet", "resnext-a", "resnext-b"]
            .iter()
            .map(|n| {
                let spec = standard_preset(n).unwrap();
                spec.validate().unwrap();
                space_size(&spec).try_into().unwrap()
            })
            .collect();
        assert_eq!(sizes, [1_259_712, 1_259_712, 11_390_625, 52_734_375]);
    }

    #[test]
    fn singleton_space() {
        let spec = StandardSpaceSpec {
            name: "one".into(),
            family: Family::ResNeXt,
            regime: Regime::Cifar,
            num_stages: 3,
            depth: HyperGrid::single(2).unwrap(),
            width: HyperGrid::single(64).unwrap(),
            ratio: Some(HyperGrid::single(2).unwrap()),
            groups: Some(HyperGrid::single(4).unwrap()),
        };
        assert_eq!(space_size(&spec), BigUint::from(1u32));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let arch = sample_standard(&spec, &mut rng);
        let stage = StageConfig {
            depth: 2,
            width: 64,
            ratio: Some(2),
            groups: Some(4),
        };
        assert_eq!(arch.stages, vec![stage; 3]);
    }

    #[test]
    fn validate_rejects_mismatched_grids() {
        let mut spec = standard_preset("resnext-a").unwrap();
        spec.groups = None;
        assert!(spec.validate().is_err());
        let mut spec = standard_preset("resnet").unwrap();
        spec.ratio = Some(HyperGrid::single(1).unwrap());
        spec.groups = Some(HyperGrid::single(1).unwrap());
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = standard_preset("resnext-b").unwrap();
        let a = sample_standard(&spec, &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_standard(&spec, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn samples_stay_on_grid() {
        for name in STANDARD_PRESETS {
            let spec = standard_preset(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..25_000 {
                let arch = sample_standard(&spec, &mut rng);
                assert!(arch.conforms_to(&spec), "{name}: {arch:?}");
                for s in &arch.stages {
                    if let (Some(b), Some(g)) = (s.bottleneck_width(), s.groups) {
                        assert!(b >= g && b % g == 0);
                    }
                }
            }
        }
    }

    #[test]
    fn brute_force_size_on_tiny_specs() {
        let grids = [
            HyperGrid::from_values(vec![1, 2]).unwrap(),
            HyperGrid::from_values(vec![3, 5, 9]).unwrap(),
            HyperGrid::single(4).unwrap(),
        ];
        for d in &grids {
            for w in &grids {
                for stages in 1..=2 {
                    let spec = StandardSpaceSpec {
                        name: "tiny".into(),
                        family: Family::ResNeXt,
                        regime: Regime::Cifar,
                        num_stages: stages,
                        depth: d.clone(),
                        width: w.clone(),
                        ratio: Some(grids[0].clone()),
                        groups: Some(grids[1].clone()),
                    };
                    let mut per_stage = Vec::new();
                    for &dv in d.values() {
                        for &wv in w.values() {
                            for &rv in grids[0].values() {
                                for &gv in grids[1].values() {
                                    per_stage.push((dv, wv, rv, gv));
                                }
                            }
                        }
                    }
                    let mut all = std::collections::HashSet::new();
                    if stages == 1 {
                        all.extend(per_stage.iter().map(|s| vec![*s]));
                    } else {
                        for a in &per_stage {
                            for b in &per_stage {
                                all.insert(vec![*a, *b]);
                            }
                        }
                    }
                    assert_eq!(space_size(&spec), BigUint::from(all.len()));
                }
            }
        }
    }

    #[test]
    fn bottleneck_rule() {
        let s = |width, ratio, groups| StageConfig {
            depth: 1,
            width,
            ratio: Some(ratio),
            groups: Some(groups),
        };
        assert_eq!(s(64, 4, 1).bottleneck_width(), Some(16));
        assert_eq!(s(64, 4, 16).bottleneck_width(), Some(16));
        assert_eq!(s(16, 4, 16).bottleneck_width(), Some(16));
        assert_eq!(s(21, 2, 4).bottleneck_width(), Some(12));
        assert_eq!(s(21, 4, 1).bottleneck_width(), Some(5));
        assert_eq!(
            StageConfig {
                ratio: None,
                groups: None,
                ..s(1, 1, 1)
            }
            .bottleneck_width(),
            None
        );
    }

    #[test]
    fn grid_toml_forms() {
        #[derive(Deserialize)]
        struct Doc {
            a: HyperGrid,
            b: HyperGrid,
        }
        let doc: Doc = toml::from_str("a = { lo = 1, hi = 24, count = 9 }\nb = { values = [2, 4, 8] }\n").unwrap();
        assert_eq!(doc.a, log_grid(1, 24, 9).unwrap());
        assert_eq!(doc.b.values(), &[2, 4, 8]);
        assert!(toml::from_str::<Doc>("a = { values = [] }\nb = { values = [1] }").is_err());
    }

    proptest! {
        #[test]
        fn grid_invariants(lo in 1u32..500, span in 0u32..5000, count in 1usize..40) {
            let hi = lo + span;
            match log_grid(lo, hi, count) {
                Ok(g) => {
                    prop_assert_eq!(g.len(), count);
                    prop_assert_eq!(g.lo(), lo);
                    prop_assert_eq!(g.hi(), hi);
                    prop_assert!(g.values().windows(2).all(|w| w[0] < w[1]));
                    prop_assert_eq!(log_grid(lo, hi, count).unwrap(), g);
                }
                Err(_) => prop_assert!(count as u32 > span + 1 || (count == 1 && span > 0)),
            }
        }

        #[test]
        fn widening_range_never_lowers_max(lo in 1u32..100, span in 10u32..1000, extra in 0u32..1000) {
            let a = log_grid(lo, lo + span, 5).unwrap();
            let b = log_grid(lo, lo + span + extra, 5).unwrap();
            prop_assert!(b.hi() >= a.hi());
        }
    }
}
