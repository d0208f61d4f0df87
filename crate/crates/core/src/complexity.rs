//! Analytic flop and parameter accounting.
//!
//! Flops are multiply-adds of convolutions and the final fully connected
//! layer. Batch norm, activations, pooling and additions cost no flops.
//! Params count conv weights, the two affine parameters of every batch norm
//! and the weights and bias of the classifier. Convs that feed a batch norm
//! carry no bias.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archspace::{ArchConfig, Family, Regime, StageConfig};
use crate::error::{Error, Result};
use crate::nascell::{CellGenotype, NasNetworkConfig, Op};

/// Width of the standard-family stem.
pub const STEM_WIDTH: u32 = 16;
/// The CIFAR NAS stem widens the initial width by this factor.
pub const NAS_STEM_MULTIPLIER: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub flops: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub flops: u64,
    pub params: u64,
    pub breakdown: Vec<Segment>,
}

impl ComplexityReport {
    fn from_segments(breakdown: Vec<Segment>) -> Self {
        ComplexityReport {
            flops: breakdown.iter().map(|s| s.flops).sum(),
            params: breakdown.iter().map(|s| s.params).sum(),
            breakdown,
        }
    }

    pub fn metric(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Flops => self.flops,
            Metric::Params => self.params,
        }
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.breakdown.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Flops,
    Params,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Flops => "flops",
            Metric::Params => "params",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flops" => Ok(Metric::Flops),
            "params" => Ok(Metric::Params),
            _ => Err(Error::Parse(format!("unknown metric `{s}`"))),
        }
    }
}

/// Strict upper bound on one complexity metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCeiling {
    pub metric: Metric,
    pub limit: u64,
}

impl ComplexityCeiling {
    pub fn new(metric: Metric, limit: u64) -> Result<Self> {
        if limit == 0 {
            return Err(Error::InvalidConfig("ceiling limit must be positive".into()));
        }
        Ok(ComplexityCeiling { metric, limit })
    }

    /// Named ceilings: `r56-flops` and `r56-params` are the computed
    /// ResNet-56 values; `in-flops` (0.6 B) and `in-params` (6 M) bound the
    /// ImageNet mobile regime.
    pub fn preset(name: &str) -> Option<Self> {
        let r56 = || standard_complexity(&resnet_reference(9), 32, 10).expect("valid reference");
        let (metric, limit) = match name {
            "r56-flops" => (Metric::Flops, r56().flops),
            "r56-params" => (Metric::Params, r56().params),
            "in-flops" => (Metric::Flops, 600_000_000),
            "in-params" => (Metric::Params, 6_000_000),
            _ => return None,
        };
        Some(ComplexityCeiling { metric, limit })
    }
}

pub fn within_ceiling(report: &ComplexityReport, ceiling: &ComplexityCeiling) -> bool {
    report.metric(ceiling.metric) < ceiling.limit
}

/// The reference ResNet with `depth` blocks per stage and widths 16, 32, 64
/// (`depth = 9` is ResNet-56, `depth = 18` is ResNet-110).
pub fn resnet_reference(depth: u32) -> ArchConfig {
    ArchConfig {
        family: Family::ResNet,
        stages: (1..=3)
            .map(|i| StageConfig {
                depth,
                width: 8 << i,
                ratio: None,
                groups: None,
            })
            .collect(),
    }
}

/// Running tally of one network segment.
#[derive(Debug, Default)]
struct Tally {
    flops: u64,
    params: u64,
}

impl Tally {
    /// k x k conv producing `res x res` outputs, followed by batch norm.
    fn conv_bn(&mut self, k: u64, c_in: u64, c_out: u64, groups: u64, res: u64) {
        let weights = k * k * c_in * c_out / groups;
        self.flops += weights * res * res;
        self.params += weights + 2 * c_out;
    }

    /// Depthwise k x k plus pointwise conv, followed by batch norm.
    fn sep_conv_bn(&mut self, k: u64, c: u64, res: u64) {
        let weights = k * k * c + c * c;
        self.flops += weights * res * res;
        self.params += weights + 2 * c;
    }

    /// Two stride-2 1x1 convs on offset grids, each producing half the
    /// output channels, then batch norm.
    fn factorized_reduce(&mut self, c_in: u64, c_out: u64, res_out: u64) {
        let half = c_out / 2;
        for part in [half, c_out - half] {
            self.flops += c_in * part * res_out * res_out;
            self.params += c_in * part;
        }
        self.params += 2 * c_out;
    }

    fn linear(&mut self, c_in: u64, c_out: u64) {
        self.flops += c_in * c_out;
        self.params += c_in * c_out + c_out;
    }

    fn segment(self, name: impl Into<String>) -> Segment {
        Segment {
            name: name.into(),
            flops: self.flops,
            params: self.params,
        }
    }
}

/// Stem segment for a regime. Returns the tally and the resolution of its
/// output. The ImageNet stem is three stride-2 3x3 convs (3 -> c/2 -> c -> c).
fn stem(regime: Regime, c: u64, res: u64) -> (Tally, u64) {
    let mut t = Tally::default();
    match regime {
        Regime::Cifar => {
            t.conv_bn(3, 3, c, 1, res);
            (t, res)
        }
        Regime::ImageNet => {
            t.conv_bn(3, 3, c / 2, 1, res / 2);
            t.conv_bn(3, c / 2, c, 1, res / 4);
            t.conv_bn(3, c, c, 1, res / 8);
            (t, res / 8)
        }
    }
}

fn stem_stride(regime: Regime) -> u32 {
    match regime {
        Regime::Cifar => 1,
        Regime::ImageNet => 8,
    }
}

/// Flops and params of a standard-family architecture.
///
/// Stage `i` runs at `res / 2^(i-1)` after the stem; the first block of every
/// stage but the first has stride 2. Residual blocks add a 1x1 projection
/// shortcut whenever the width or resolution changes.
pub fn standard_complexity(cfg: &ArchConfig, input_resolution: u32, num_classes: u32) -> Result<ComplexityReport> {
    standard_complexity_in(cfg, Regime::Cifar, input_resolution, num_classes)
}

/// [`standard_complexity`] with an explicit stem regime.
pub fn standard_complexity_in(
    cfg: &ArchConfig,
    regime: Regime,
    input_resolution: u32,
    num_classes: u32,
) -> Result<ComplexityReport> {
    if cfg.stages.is_empty() || num_classes == 0 {
        return Err(Error::InvalidConfig("need at least one stage and one class".into()));
    }
    let total_stride = stem_stride(regime) << (cfg.stages.len() - 1);
    if input_resolution == 0 || !input_resolution.is_multiple_of(total_stride) {
        return Err(Error::InvalidConfig(format!(
            "input resolution {input_resolution} not divisible by {total_stride}"
        )));
    }
    for (i, s) in cfg.stages.iter().enumerate() {
        if s.depth == 0 || s.width == 0 {
            return Err(Error::InvalidConfig(format!("stage {} has zero depth or width", i + 1)));
        }
        if cfg.family == Family::ResNeXt && !matches!((s.ratio, s.groups), (Some(r), Some(g)) if r > 0 && g > 0) {
            return Err(Error::InvalidConfig(format!(
                "resnext stage {} needs positive ratio and groups",
                i + 1
            )));
        }
    }

    let mut segments = Vec::with_capacity(cfg.stages.len() + 2);
    let (t, mut res) = stem(regime, STEM_WIDTH.into(), input_resolution.into());
    segments.push(t.segment("stem"));

    let mut c_in = u64::from(STEM_WIDTH);
    for (i, stage) in cfg.stages.iter().enumerate() {
        let mut t = Tally::default();
        let w = u64::from(stage.width);
        for b in 0..stage.depth {
            let stride = if i > 0 && b == 0 { 2 } else { 1 };
            let out = res / stride;
            match cfg.family {
                Family::Vanilla | Family::ResNet => {
                    t.conv_bn(3, c_in, w, 1, out);
                    t.conv_bn(3, w, w, 1, out);
                }
                Family::ResNeXt => {
                    let bw = u64::from(stage.bottleneck_width().expect("checked above"));
                    let g = u64::from(stage.groups.expect("checked above"));
                    t.conv_bn(1, c_in, bw, 1, res);
                    t.conv_bn(3, bw, bw, g, out);
                    t.conv_bn(1, bw, w, 1, out);
                }
            }
            if cfg.family != Family::Vanilla && (c_in != w || stride != 1) {
                t.conv_bn(1, c_in, w, 1, out);
            }
            c_in = w;
            res = out;
        }
        segments.push(t.segment(format!("stage{}", i + 1)));
    }

    let mut head = Tally::default();
    head.linear(c_in, num_classes.into());
    segments.push(head.segment("head"));
    Ok(ComplexityReport::from_segments(segments))
}

/// Cost of one op at `channels` width producing `res x res` outputs.
///
/// `stride` is 1 or 2; a stride-2 identity becomes a factorized reduction.
pub fn op_cost(op: &Op, channels: u32, res: u32, stride: u32) -> Result<(u64, u64)> {
    let (c, r) = (u64::from(channels), u64::from(res));
    let mut t = Tally::default();
    match op {
        Op::Zero | Op::MaxPool { .. } | Op::AvgPool { .. } => {}
        Op::Identity => {
            if stride != 1 {
                t.factorized_reduce(c, c, r);
            }
        }
        Op::Conv { kernel, .. } => t.conv_bn(u64::from(*kernel), c, c, 1, r),
        Op::SepConv { kernel, .. } => t.sep_conv_bn(u64::from(*kernel), c, r),
        Op::ConvPair { kernel } => {
            let k = u64::from(*kernel);
            t.flops += 2 * k * c * c * r * r;
            t.params += 2 * k * c * c + 2 * c;
        }
        Op::Custom(name) => return Err(Error::UnknownOp(name.clone())),
    }
    Ok((t.flops, t.params))
}

/// A cell input: channel count and spatial resolution.
#[derive(Debug, Clone, Copy)]
struct Tensor {
    channels: u64,
    res: u64,
}

fn cell_cost(
    cell: &CellGenotype,
    ops: &[Op],
    s0: Tensor,
    s1: Tensor,
    width: u64,
    reduction: bool,
) -> Result<(Tally, Tensor)> {
    let mut t = Tally::default();
    if s0.res != s1.res {
        t.factorized_reduce(s0.channels, width, s1.res);
    } else {
        t.conv_bn(1, s0.channels, width, 1, s0.res);
    }
    t.conv_bn(1, s1.channels, width, 1, s1.res);

    // padded stride-2 ops round up
    let out_res = if reduction { s1.res.div_ceil(2) } else { s1.res };
    for node in &cell.nodes {
        for e in [node.a, node.b] {
            let op = ops
                .get(e.op)
                .ok_or_else(|| Error::InvalidConfig(format!("op index {} out of range", e.op)))?;
            let stride = if reduction && e.input < 2 { 2 } else { 1 };
            let (f, p) = op_cost(op, width as u32, out_res as u32, stride)?;
            t.flops += f;
            t.params += p;
        }
    }
    let out = Tensor {
        channels: width * cell.output_nodes().len() as u64,
        res: out_res,
    };
    Ok((t, out))
}

/// Flops and params of a NAS network.
///
/// Each cell projects both inputs to its width (a factorized stride-2
/// projection when the older input still has twice the resolution), applies
/// its ops and concatenates its output nodes. Reduction cells double the
/// width and halve the resolution; their ops on the cell inputs run with
/// stride 2.
pub fn nas_complexity(
    net: &NasNetworkConfig,
    regime: Regime,
    input_resolution: u32,
    num_classes: u32,
) -> Result<ComplexityReport> {
    net.normal_cell.validate(net.ops.len())?;
    net.reduction_cell.validate(net.ops.len())?;
    if net.init_width == 0 || num_classes == 0 {
        return Err(Error::InvalidConfig("width and class count must be positive".into()));
    }
    let stride = stem_stride(regime);
    if input_resolution == 0 || !input_resolution.is_multiple_of(stride) {
        return Err(Error::InvalidConfig(format!(
            "input resolution {input_resolution} not divisible by {stride}"
        )));
    }
    if net.reduction_positions.iter().any(|&p| p == 0 || p > net.depth) {
        return Err(Error::InvalidConfig("reduction position outside the network".into()));
    }

    let res = u64::from(input_resolution);
    let w = u64::from(net.init_width);
    let mut segments = Vec::with_capacity(net.depth as usize + 2);
    let (mut s0, mut s1) = match regime {
        Regime::Cifar => {
            let c = w * u64::from(NAS_STEM_MULTIPLIER);
            let mut t = Tally::default();
            t.conv_bn(3, 3, c, 1, res);
            segments.push(t.segment("stem"));
            let x = Tensor { channels: c, res };
            (x, x)
        }
        Regime::ImageNet => {
            let mut t = Tally::default();
            t.conv_bn(3, 3, w / 2, 1, res / 2);
            t.conv_bn(3, w / 2, w, 1, res / 4);
            t.conv_bn(3, w, w, 1, res / 8);
            segments.push(t.segment("stem"));
            (
                Tensor {
                    channels: w,
                    res: res / 4,
                },
                Tensor {
                    channels: w,
                    res: res / 8,
                },
            )
        }
    };

    let mut width = w;
    for pos in 1..=net.depth {
        let reduction = net.reduction_positions.contains(&pos);
        if reduction {
            width *= 2;
        }
        let cell = if reduction {
            &net.reduction_cell
        } else {
            &net.normal_cell
        };
        let (t, out) = cell_cost(cell, &net.ops, s0, s1, width, reduction)?;
        let name = if reduction {
            format!("cell{pos:02}-reduce")
        } else {
            format!("cell{pos:02}")
        };
        segments.push(t.segment(name));
        s0 = s1;
        s1 = out;
    }

    let mut head = Tally::default();
    head.linear(s1.channels, num_classes.into());
    segments.push(head.segment("head"));
    Ok(ComplexityReport::from_segments(segments))
}
