//! Spatial-pyramid context encoder with multi-kernel group convolutions.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};
use crate::tensor::{ConvParams, ResizeMode};

use super::config::EncoderConfig;
use super::{unit, Post};

/// Depthwise `kernel x kernel` then pointwise to `out_c`, each with affine
/// and relu.
fn separable(
    graph: &mut Graph,
    prefix: &str,
    input: NodeId,
    in_c: usize,
    out_c: usize,
    kernel: usize,
) -> Result<NodeId> {
    let dw = unit(
        graph,
        &format!("{prefix}/dw"),
        input,
        Op::DepthwiseConv { params: ConvParams::depthwise(kernel, 1, 1, in_c) },
        Post::Relu,
    )?;
    unit(
        graph,
        &format!("{prefix}/pw"),
        dw,
        Op::Conv { params: ConvParams::pointwise(in_c, out_c), bias: false },
        Post::Relu,
    )
}

/// One branch per kernel size, each producing `enc_filters / |kernels|`
/// channels, concatenated to `enc_filters`. With group convolution each
/// branch sees its own equal slice of the input channels; without it every
/// branch sees all of them.
pub fn build_multi_kernel_group_conv(
    graph: &mut Graph,
    prefix: &str,
    level: NodeId,
    in_c: usize,
    cfg: &EncoderConfig,
) -> Result<NodeId> {
    let branches = cfg.group_kernels.len();
    if branches == 0 {
        return Err(Error::config("group_kernels: at least one kernel size is required"));
    }
    if !cfg.enc_filters.is_multiple_of(branches) {
        return Err(Error::config(format!(
            "enc_filters: {} is not divisible by {branches} kernel branches",
            cfg.enc_filters
        )));
    }
    if cfg.use_group_conv && !in_c.is_multiple_of(branches) {
        return Err(Error::config(format!(
            "use_group_conv: {in_c} channels cannot be split into {branches} equal groups"
        )));
    }
    let out_per = cfg.enc_filters / branches;
    let mut outs = Vec::with_capacity(branches);
    for (i, &k) in cfg.group_kernels.iter().enumerate() {
        let name = format!("{prefix}/group{i}_k{k}");
        let (src, c) = if cfg.use_group_conv && branches > 1 {
            let len = in_c / branches;
            let s = graph.add_node(format!("{name}/slice"), Op::SliceChannels { start: i * len, len }, &[level])?;
            (s, len)
        } else {
            (level, in_c)
        };
        outs.push(separable(graph, &name, src, c, out_per, k)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        graph.add_node(format!("{prefix}/concat"), Op::ConcatChannels, &outs)
    }
}

/// Pools the `os16` feature (spatial `feat_h x feat_w`, `m` channels) onto
/// each pyramid grid, applies the multi-kernel conv, resizes back, concats
/// the raw feature with every level, and projects to `out_width`.
#[allow(clippy::too_many_arguments)]
pub fn build_context_encoder(
    graph: &mut Graph,
    os16: NodeId,
    feat_h: usize,
    feat_w: usize,
    m: usize,
    cfg: &EncoderConfig,
    out_width: usize,
    mode: ResizeMode,
) -> Result<NodeId> {
    if cfg.pyramid_bins.is_empty() {
        return Err(Error::config("pyramid_bins: at least one level is required"));
    }
    let mut parts = vec![os16];
    for &g in &cfg.pyramid_bins {
        if g == 0 || g > feat_h || g > feat_w {
            return Err(Error::config(format!(
                "pyramid_bins: grid {g}x{g} does not fit the {feat_h}x{feat_w} os16 feature"
            )));
        }
        let prefix = format!("encoder/level_g{g}");
        let pool_op = if g == 1 { Op::GlobalPool } else { Op::AvgPoolGrid { grid_h: g, grid_w: g } };
        let pooled = graph.add_node(format!("{prefix}/pool"), pool_op, &[os16])?;
        let mixed = build_multi_kernel_group_conv(graph, &format!("{prefix}/mkconv"), pooled, m, cfg)?;
        let up = graph.add_node(
            format!("{prefix}/upsample"),
            Op::BilinearResize { out_h: feat_h, out_w: feat_w, mode },
            &[mixed],
        )?;
        parts.push(up);
    }
    let concat = graph.add_node("encoder/concat", Op::ConcatChannels, &parts)?;
    let width = m + cfg.pyramid_bins.len() * cfg.enc_filters;
    unit(
        graph,
        "encoder/project",
        concat,
        Op::Conv { params: ConvParams::pointwise(width, out_width), bias: false },
        Post::Relu,
    )
}
