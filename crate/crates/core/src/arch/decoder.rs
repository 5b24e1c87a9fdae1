//! Hybrid decoder: concatenation and summation merges, then the classifier.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};
use crate::tensor::{ConvParams, ResizeMode};

use super::backbone::BackboneTaps;
use super::config::{ClassifierPlacement, DecoderConfig, MergeStyle};
use super::{unit, Post};

/// Concat the resized semantic branch with the skip, then 1x1, depthwise
/// 3x3, 1x1, each followed by affine and relu.
pub fn build_concat_merge(
    graph: &mut Graph,
    prefix: &str,
    semantic: NodeId,
    semantic_c: usize,
    skip: NodeId,
    skip_c: usize,
    dec_filters: usize,
) -> Result<NodeId> {
    let cat = graph.add_node(format!("{prefix}/concat"), Op::ConcatChannels, &[semantic, skip])?;
    let reduce = unit(
        graph,
        &format!("{prefix}/reduce"),
        cat,
        Op::Conv { params: ConvParams::pointwise(semantic_c + skip_c, dec_filters), bias: false },
        Post::Relu,
    )?;
    let dw = unit(
        graph,
        &format!("{prefix}/dw"),
        reduce,
        Op::DepthwiseConv { params: ConvParams::depthwise(3, 1, 1, dec_filters) },
        Post::Relu,
    )?;
    unit(
        graph,
        &format!("{prefix}/fuse"),
        dw,
        Op::Conv { params: ConvParams::pointwise(dec_filters, dec_filters), bias: false },
        Post::Relu,
    )
}

/// Adds a linear 1x1 projection of the skip to the resized semantic branch.
pub fn build_sum_merge(
    graph: &mut Graph,
    prefix: &str,
    semantic: NodeId,
    skip: NodeId,
    skip_c: usize,
    width: usize,
) -> Result<NodeId> {
    let proj = unit(
        graph,
        &format!("{prefix}/project"),
        skip,
        Op::Conv { params: ConvParams::pointwise(skip_c, width), bias: false },
        Post::Linear,
    )?;
    graph.add_node(format!("{prefix}/add"), Op::Add, &[semantic, proj])
}

/// Everything the decoder needs besides the skip list.
#[derive(Clone, Copy, Debug)]
pub struct HeadSpec {
    pub num_classes: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub resize_mode: ResizeMode,
    pub placement: ClassifierPlacement,
}

/// Index of the first skip in the trailing run of sum merges, or the skip
/// count if the list does not end with one.
pub fn classifier_position(cfg: &DecoderConfig, placement: ClassifierPlacement) -> usize {
    let n = cfg.skips.len();
    match placement {
        ClassifierPlacement::AfterMerges => n,
        ClassifierPlacement::BeforeSums => {
            let trailing = cfg.skips.iter().rev().take_while(|s| s.merge == MergeStyle::Sum).count();
            n - trailing
        }
    }
}

fn classifier(graph: &mut Graph, input: NodeId, in_c: usize, k: usize) -> Result<NodeId> {
    graph.add_node("head/classifier", Op::Conv { params: ConvParams::pointwise(in_c, k), bias: true }, &[input])
}

/// Walks the skips from coarse to fine and returns the full-resolution
/// class logits.
pub fn build_decoder(
    graph: &mut Graph,
    encoded: NodeId,
    encoded_c: usize,
    taps: &BackboneTaps,
    cfg: &DecoderConfig,
    head: &HeadSpec,
) -> Result<NodeId> {
    let k = head.num_classes;
    let at = classifier_position(cfg, head.placement);
    let mut cur = encoded;
    let mut c = encoded_c;
    for (i, skip) in cfg.skips.iter().enumerate() {
        if i == at {
            cur = classifier(graph, cur, c, k)?;
            c = k;
        }
        let os = skip.output_stride;
        let (tap, tap_c) = taps
            .get(os)
            .zip(taps.width(os))
            .ok_or_else(|| Error::config(format!("skips: no backbone tap at output stride {os}")))?;
        let style = match skip.merge {
            MergeStyle::Concat => "concat",
            MergeStyle::Sum => "sum",
        };
        let prefix = format!("decoder/merge{}_os{os}_{style}", i + 1);
        let up = graph.add_node(
            format!("{prefix}/upsample"),
            Op::BilinearResize { out_h: head.input_h / os, out_w: head.input_w / os, mode: head.resize_mode },
            &[cur],
        )?;
        cur = match skip.merge {
            MergeStyle::Concat => build_concat_merge(graph, &prefix, up, c, tap, tap_c, cfg.dec_filters)?,
            MergeStyle::Sum => build_sum_merge(graph, &prefix, up, tap, tap_c, c)?,
        };
        if skip.merge == MergeStyle::Concat {
            c = cfg.dec_filters;
        }
    }
    if at == cfg.skips.len() {
        cur = classifier(graph, cur, c, k)?;
    }
    graph.add_node(
        "head/upsample",
        Op::BilinearResize { out_h: head.input_h, out_w: head.input_w, mode: head.resize_mode },
        &[cur],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::config::SkipSpec;
    use crate::graph::OpKind;
    use crate::tensor::TensorShape;

    #[test]
    fn concat_merge_shape_and_lowering() {
        let mut g = Graph::new();
        let src = g.add_input("input", 128).unwrap();
        let sem = g.add_node("sem", Op::SliceChannels { start: 0, len: 64 }, &[src]).unwrap();
        let skip = g.add_node("skip", Op::SliceChannels { start: 64, len: 64 }, &[src]).unwrap();
        let before = g.len();
        let out = build_concat_merge(&mut g, "m", sem, 64, skip, 64, 64).unwrap();
        let shapes = g.infer_shapes(TensorShape::new(128, 256, 128).unwrap()).unwrap();
        assert_eq!(shapes.get(out), TensorShape::new(128, 256, 64).unwrap());
        let added: Vec<OpKind> = g.nodes()[before..].iter().map(|n| n.op.kind()).collect();
        let compute = added.iter().filter(|k| !matches!(k, OpKind::Affine | OpKind::Relu)).count();
        // concat, 1x1, depthwise, 1x1
        assert_eq!(compute, 4);
        assert_eq!(added.iter().filter(|&&k| k == OpKind::Affine).count(), 3);
        assert_eq!(added.iter().filter(|&&k| k == OpKind::Relu).count(), 3);
    }

    #[test]
    fn sum_merge_is_linear_projection_plus_add() {
        let mut g = Graph::new();
        let src = g.add_input("input", 96).unwrap();
        let sem = g.add_node("sem", Op::SliceChannels { start: 0, len: 64 }, &[src]).unwrap();
        let skip = g.add_node("skip", Op::SliceChannels { start: 64, len: 32 }, &[src]).unwrap();
        let out = build_sum_merge(&mut g, "s", sem, skip, 32, 64).unwrap();
        let shapes = g.infer_shapes(TensorShape::new(256, 512, 96).unwrap()).unwrap();
        assert_eq!(shapes.get(out), TensorShape::new(256, 512, 64).unwrap());
        assert!(g.nodes().iter().all(|n| n.op.kind() != OpKind::Relu));
    }

    #[test]
    fn classifier_positions() {
        let cfg = |skips: Vec<SkipSpec>| DecoderConfig { skips, dec_filters: 64 };
        let b = ClassifierPlacement::BeforeSums;
        assert_eq!(classifier_position(&cfg(vec![]), b), 0);
        assert_eq!(classifier_position(&cfg(vec![SkipSpec::concat(8), SkipSpec::sum(4)]), b), 1);
        assert_eq!(classifier_position(&cfg(vec![SkipSpec::sum(8), SkipSpec::sum(4)]), b), 0);
        assert_eq!(classifier_position(&cfg(vec![SkipSpec::concat(8), SkipSpec::concat(4)]), b), 2);
        assert_eq!(classifier_position(&cfg(vec![SkipSpec::sum(8), SkipSpec::concat(4)]), b), 2);
        let a = ClassifierPlacement::AfterMerges;
        assert_eq!(classifier_position(&cfg(vec![SkipSpec::concat(8), SkipSpec::sum(4)]), a), 2);
    }
}
