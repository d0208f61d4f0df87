//! NAS cell design spaces.
//!
//! A cell is a small DAG over `k` nodes. Node `j` (1-based) picks two inputs
//! from the two cell inputs and the `j - 1` earlier nodes, applies one
//! candidate op to each input and sums the results. Networks stack cells,
//! with three reduction cells placed at even intervals.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::Regime;
use crate::error::{Error, Result};

/// A candidate operation applied to one node input.
///
/// Ops are named in configs and records by a short string, e.g.
/// `sep_conv_5x5`, `conv_3x3_dil2`, `conv_1x7_7x1`, `max_pool_3x3`.
/// Names that do not parse are kept as [`Op::Custom`] and have no cost
/// formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    /// Outputs zeros.
    Zero,
    Identity,
    MaxPool {
        kernel: u32,
    },
    AvgPool {
        kernel: u32,
    },
    Conv {
        kernel: u32,
        dilation: u32,
    },
    /// Depthwise `kernel x kernel` conv followed by a pointwise conv.
    SepConv {
        kernel: u32,
        dilation: u32,
    },
    /// `1 x k` conv followed by a `k x 1` conv.
    ConvPair {
        kernel: u32,
    },
    Custom(String),
}

fn parse_square(s: &str) -> Option<u32> {
    let (a, b) = s.split_once('x')?;
    let (a, b): (u32, u32) = (a.parse().ok()?, b.parse().ok()?);
    (a == b && a > 0).then_some(a)
}

fn parse_kernel_dil(s: &str) -> Option<(u32, u32)> {
    match s.split_once("_dil") {
        Some((k, d)) => Some((parse_square(k)?, d.parse().ok().filter(|&d| d > 0)?)),
        None => Some((parse_square(s)?, 1)),
    }
}

impl FromStr for Op {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parsed = match s {
            "none" => Some(Op::Zero),
            "identity" => Some(Op::Identity),
            _ => {
                if let Some(rest) = s.strip_prefix("max_pool_") {
                    parse_square(rest).map(|kernel| Op::MaxPool { kernel })
                } else if let Some(rest) = s.strip_prefix("avg_pool_") {
                    parse_square(rest).map(|kernel| Op::AvgPool { kernel })
                } else if let Some(rest) = s.strip_prefix("sep_conv_") {
                    parse_kernel_dil(rest).map(|(kernel, dilation)| Op::SepConv { kernel, dilation })
                } else if let Some(rest) = s.strip_prefix("conv_1x") {
                    // conv_1xk_kx1
                    rest.split_once("_")
                        .and_then(|(k, tail)| {
                            let k: u32 = k.parse().ok()?;
                            (tail == format!("{k}x1") && k > 0).then_some(Op::ConvPair { kernel: k })
                        })
                        .or_else(|| {
                            parse_kernel_dil(&format!("1x{rest}"))
                                .map(|(kernel, dilation)| Op::Conv { kernel, dilation })
                        })
                } else if let Some(rest) = s.strip_prefix("conv_") {
                    parse_kernel_dil(rest).map(|(kernel, dilation)| Op::Conv { kernel, dilation })
                } else {
                    None
                }
            }
        };
        Ok(parsed.unwrap_or_else(|| Op::Custom(s.to_string())))
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dil = |d: u32| if d == 1 { String::new() } else { format!("_dil{d}") };
        match self {
            Op::Zero => write!(f, "none"),
            Op::Identity => write!(f, "identity"),
            Op::MaxPool { kernel: k } => write!(f, "max_pool_{k}x{k}"),
            Op::AvgPool { kernel: k } => write!(f, "avg_pool_{k}x{k}"),
            Op::Conv { kernel: k, dilation } => write!(f, "conv_{k}x{k}{}", dil(*dilation)),
            Op::SepConv { kernel: k, dilation } => write!(f, "sep_conv_{k}x{k}{}", dil(*dilation)),
            Op::ConvPair { kernel: k } => write!(f, "conv_1x{k}_{k}x1"),
            Op::Custom(name) => f.write_str(name),
        }
    }
}

impl Serialize for Op {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Op {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap())
    }
}

/// Which nodes are concatenated into the cell output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputRule {
    /// Every node.
    #[serde(rename = "A")]
    All,
    /// Only nodes that no later node consumes.
    #[serde(rename = "L")]
    Loose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSet {
    pub name: String,
    pub ops: Vec<Op>,
}

impl OpSet {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Cell structure of a named NAS design space: op inventory, node count and
/// output rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellStructure {
    pub opset: OpSet,
    pub num_nodes: usize,
    pub output_rule: OutputRule,
}

fn ops(names: &[&str]) -> Vec<Op> {
    names.iter().map(|n| n.parse().unwrap()).collect()
}

/// Built-in cell structures. Op inventories follow the originating search
/// papers; only their counts are fixed by the design-space definitions.
pub fn cell_preset(name: &str) -> Option<CellStructure> {
    use OutputRule::*;
    let (list, num_nodes, output_rule): (&[&str], usize, OutputRule) = match name {
        "nasnet" => (
            &[
                "identity",
                "conv_1x3_3x1",
                "conv_1x7_7x1",
                "conv_3x3_dil2",
                "avg_pool_3x3",
                "max_pool_3x3",
                "max_pool_5x5",
                "max_pool_7x7",
                "conv_1x1",
                "conv_3x3",
                "sep_conv_3x3",
                "sep_conv_5x5",
                "sep_conv_7x7",
            ],
            5,
            Loose,
        ),
        "amoeba" => (
            &[
                "identity",
                "avg_pool_3x3",
                "max_pool_3x3",
                "sep_conv_3x3",
                "sep_conv_5x5",
                "sep_conv_7x7",
                "sep_conv_3x3_dil2",
                "conv_1x7_7x1",
            ],
            5,
            Loose,
        ),
        "pnas" => (
            &[
                "sep_conv_3x3",
                "identity",
                "avg_pool_3x3",
                "max_pool_3x3",
                "sep_conv_5x5",
                "max_pool_7x7",
                "sep_conv_7x7",
                "conv_1x7_7x1",
            ],
            5,
            All,
        ),
        "enas" => (
            &[
                "identity",
                "sep_conv_3x3",
                "sep_conv_5x5",
                "avg_pool_3x3",
                "max_pool_3x3",
            ],
            5,
            Loose,
        ),
        "darts" => (
            &[
                "none",
                "max_pool_3x3",
                "avg_pool_3x3",
                "identity",
                "sep_conv_3x3",
                "sep_conv_5x5",
                "sep_conv_3x3_dil2",
                "sep_conv_5x5_dil2",
            ],
            4,
            All,
        ),
        _ => return None,
    };
    Some(CellStructure {
        opset: OpSet {
            name: name.to_string(),
            ops: ops(list),
        },
        num_nodes,
        output_rule,
    })
}

pub const CELL_PRESETS: &[&str] = &["nasnet", "amoeba", "pnas", "enas", "darts"];

/// Number of cells with `k` nodes over `o` ops: `o^(2k) * ((k+1)!)^2`.
///
/// Node `j` has `o^2 * (j+1)^2` choices. Structurally redundant cells are
/// counted separately.
pub fn cell_count(o: u32, k: u32) -> BigUint {
    let ops = BigUint::from(o).pow(2 * k);
    let fact = (2..=k + 1).fold(BigUint::from(1u32), |acc, i| acc * i);
    ops * &fact * &fact
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    /// 0 and 1 are the cell inputs; `j + 1` is node `j`.
    pub input: usize,
    pub op: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub a: Edge,
    pub b: Edge,
}

/// A sampled cell.
///
/// Serialized as a compact string: nodes separated by `|`, each node written
/// `input:op,input:op`, followed by `;A` or `;L` for the output rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellGenotype {
    pub nodes: Vec<Node>,
    pub output_rule: OutputRule,
}

impl CellGenotype {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Checks input ranges and op indices against an op count.
    pub fn validate(&self, num_ops: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidConfig("cell has no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let j = i + 1;
            for e in [node.a, node.b] {
                if e.input > j {
                    return Err(Error::InvalidConfig(format!(
                        "node {j} input {} out of range 0..={j}",
                        e.input
                    )));
                }
                if e.op >= num_ops {
                    return Err(Error::InvalidConfig(format!(
                        "node {j} op {} out of range for {num_ops} ops",
                        e.op
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nodes (1-based) that no later node consumes.
    pub fn loose_nodes(&self) -> BTreeSet<usize> {
        let k = self.nodes.len();
        let mut loose: BTreeSet<usize> = (1..=k).collect();
        for node in &self.nodes {
            for e in [node.a, node.b] {
                if e.input >= 2 {
                    loose.remove(&(e.input - 1));
                }
            }
        }
        loose
    }

    /// Nodes (1-based) concatenated into the cell output.
    pub fn output_nodes(&self) -> BTreeSet<usize> {
        match self.output_rule {
            OutputRule::All => (1..=self.nodes.len()).collect(),
            OutputRule::Loose => self.loose_nodes(),
        }
    }
}

/// Loose nodes of `g`. Under rule `All` every node counts as an output.
pub fn loose_nodes(g: &CellGenotype) -> BTreeSet<usize> {
    g.output_nodes()
}

impl fmt::Display for CellGenotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}:{},{}:{}", n.a.input, n.a.op, n.b.input, n.b.op)?;
        }
        let rule = match self.output_rule {
            OutputRule::All => 'A',
            OutputRule::Loose => 'L',
        };
        write!(f, ";{rule}")
    }
}

impl FromStr for CellGenotype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed genotype `{s}`"));
        let (body, rule) = s.rsplit_once(';').ok_or_else(bad)?;
        let output_rule = match rule {
            "A" => OutputRule::All,
            "L" => OutputRule::Loose,
            _ => return Err(bad()),
        };
        let edge = |t: &str| -> Result<Edge> {
            let (i, o) = t.split_once(':').ok_or_else(bad)?;
            Ok(Edge {
                input: i.trim().parse().map_err(|_| bad())?,
                op: o.trim().parse().map_err(|_| bad())?,
            })
        };
        let nodes = body
            .split('|')
            .map(|n| {
                let (a, b) = n.split_once(',').ok_or_else(bad)?;
                Ok(Node {
                    a: edge(a)?,
                    b: edge(b)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = CellGenotype { nodes, output_rule };
        g.validate(usize::MAX)?;
        Ok(g)
    }
}

impl Serialize for CellGenotype {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellGenotype {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Samples a cell step by step: for each node, two inputs uniform over the
/// `j + 1` candidates and two ops uniform over the op set.
pub fn sample_cell<R: Rng + ?Sized>(num_ops: usize, k: usize, output_rule: OutputRule, rng: &mut R) -> CellGenotype {
    assert!(num_ops > 0 && k > 0);
    let nodes = (1..=k)
        .map(|j| {
            let ia = rng.random_range(0..=j);
            let ib = rng.random_range(0..=j);
            let oa = rng.random_range(0..num_ops);
            let ob = rng.random_range(0..num_ops);
            Node {
                a: Edge { input: ia, op: oa },
                b: Edge { input: ib, op: ob },
            }
        })
        .collect();
    CellGenotype { nodes, output_rule }
}

/// 1-based positions of the three reduction cells in a `depth`-cell network:
/// `q, 2q, 3q` with `q = ceil(depth / 4)`.
pub fn reduction_positions(depth: u32) -> Result<Vec<u32>> {
    let q = depth.div_ceil(4);
    if depth == 0 || 3 * q > depth {
        return Err(Error::InvalidConfig(format!(
            "depth {depth} cannot hold three evenly placed reduction cells"
        )));
    }
    Ok(vec![q, 2 * q, 3 * q])
}

/// A full NAS network: two cells, initial width and total cell count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NasNetworkConfig {
    pub ops: Vec<Op>,
    pub normal_cell: CellGenotype,
    pub reduction_cell: CellGenotype,
    pub init_width: u32,
    pub depth: u32,
    pub reduction_positions: Vec<u32>,
}

/// A NAS design space: cell structure plus width and depth sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NasSpaceSpec {
    pub name: String,
    #[serde(default)]
    pub regime: Regime,
    pub ops: Vec<Op>,
    pub num_nodes: usize,
    pub output_rule: OutputRule,
    pub widths: Vec<u32>,
    pub depths: Vec<u32>,
    /// Use one genotype for both normal and reduction cells.
    #[serde(default)]
    pub shared_cells: bool,
}

pub const CIFAR_WIDTHS: &[u32] = &[16, 24, 32];
pub const CIFAR_DEPTHS: &[u32] = &[4, 8, 12, 16, 20];
pub const IMAGENET_WIDTHS: &[u32] = &[32, 48, 64, 80, 96];
pub const IMAGENET_DEPTHS: &[u32] = &[6, 10, 14, 18, 22];

impl NasSpaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() || self.num_nodes == 0 {
            return Err(Error::InvalidConfig("NAS space needs ops and nodes".into()));
        }
        if self.widths.is_empty() || self.depths.is_empty() {
            return Err(Error::InvalidConfig("width and depth sets must be nonempty".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidConfig("widths must be positive".into()));
        }
        for &d in &self.depths {
            reduction_positions(d)?;
        }
        Ok(())
    }

    /// Number of distinct cells.
    pub fn cell_count(&self) -> BigUint {
        cell_count(self.ops.len() as u32, self.num_nodes as u32)
    }

    /// Number of distinct networks (cells times width and depth choices).
    pub fn network_count(&self) -> BigUint {
        let cells = self.cell_count();
        let cells = if self.shared_cells { cells } else { &cells * &cells };
        cells * self.widths.len() * self.depths.len()
    }
}

/// Built-in NAS spaces: `<cell>` for CIFAR and `<cell>-in` for ImageNet.
pub fn nas_preset(name: &str) -> Option<NasSpaceSpec> {
    let (base, regime, widths, depths) = match name.strip_suffix("-in") {
        Some(base) => (base, Regime::ImageNet, IMAGENET_WIDTHS, IMAGENET_DEPTHS),
        None => (name, Regime::Cifar, CIFAR_WIDTHS, CIFAR_DEPTHS),
    };
    let cell = cell_preset(base)?;
    Some(NasSpaceSpec {
        name: name.to_string(),
        regime,
        ops: cell.opset.ops,
        num_nodes: cell.num_nodes,
        output_rule: cell.output_rule,
        widths: widths.to_vec(),
        depths: depths.to_vec(),
        shared_cells: false,
    })
}

/// Samples a network: cells via [`sample_cell`], then width and depth
/// uniformly from their sets.
pub fn sample_nas_network<R: Rng + ?Sized>(spec: &NasSpaceSpec, rng: &mut R) -> Result<NasNetworkConfig> {
    spec.validate()?;
    let normal_cell = sample_cell(spec.ops.len(), spec.num_nodes, spec.output_rule, rng);
    let reduction_cell = if spec.shared_cells {
        normal_cell.clone()
    } else {
        sample_cell(spec.ops.len(), spec.num_nodes, spec.output_rule, rng)
    };
    let init_width = spec.widths[rng.random_range(0..spec.widths.len())];
    let depth = spec.depths[rng.random_range(0..spec.depths.len())];
    Ok(NasNetworkConfig {
        ops: spec.ops.clone(),
        normal_cell,
        reduction_cell,
        init_width,
        depth,
        reduction_positions: reduction_positions(depth)?,
    })
}
