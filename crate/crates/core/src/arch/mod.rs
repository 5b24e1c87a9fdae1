//! Builders that turn a [`ModelConfig`] into a [`Graph`].

pub mod backbone;
pub mod config;
pub mod decoder;
pub mod encoder;

use std::collections::BTreeMap;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op, ShapeTable, Value};
use crate::io::{init_weights, WeightStore};
use crate::tensor::{LabelMap, Tensor, TensorShape};

pub use backbone::{build_backbone, build_bneck, table_rows, BackboneRow, BackboneTaps, RowOp};
pub use config::{
    parse_skips, skips_label, AggregationWidth, ClassifierPlacement, DecoderConfig, EncoderConfig, MergeStyle,
    ModelConfig, SkipSpec,
};
pub use decoder::{build_concat_merge, build_decoder, build_sum_merge, HeadSpec};
pub use encoder::{build_context_encoder, build_multi_kernel_group_conv};

/// What follows a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Post {
    /// Affine then relu.
    Relu,
    /// Affine only.
    Linear,
}

/// Adds a conv or depthwise node named `name` followed by `name_bn` (affine)
/// and, for [`Post::Relu`], `name_relu`.
pub(crate) fn unit(graph: &mut Graph, name: &str, input: NodeId, op: Op, post: Post) -> Result<NodeId> {
    let channels = match &op {
        Op::Conv { params, .. } | Op::DepthwiseConv { params } => params.out_c,
        _ => return Err(Error::graph(format!("'{name}' is not a convolution"))),
    };
    let conv = graph.add_node(name, op, &[input])?;
    let bn = graph.add_node(format!("{name}_bn"), Op::Affine { channels }, &[conv])?;
    match post {
        Post::Relu => graph.add_node(format!("{name}_relu"), Op::Relu, &[bn]),
        Post::Linear => Ok(bn),
    }
}

/// A built network with its shape table.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub graph: Graph,
    pub shapes: ShapeTable,
    pub taps: BackboneTaps,
    pub encoded: NodeId,
    pub logits: NodeId,
    pub labels: NodeId,
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub logits: Tensor,
    pub labels: LabelMap,
    /// Wall-clock time per build stage, in first-seen order.
    pub stage_times: Vec<(String, Duration)>,
}

impl Model {
    pub fn input_shape(&self) -> TensorShape {
        TensorShape { h: self.config.input_h, w: self.config.input_w, c: 3 }
    }

    pub fn init_weights(&self, seed: u64) -> WeightStore {
        init_weights(&self.graph, seed)
    }

    /// Runs the network on one image.
    pub fn predict(&self, weights: &WeightStore, image: &Tensor) -> Result<Prediction> {
        if image.shape() != self.input_shape() {
            return Err(Error::shape(format!(
                "input image is {}, the model expects {}",
                image.shape(),
                self.input_shape()
            )));
        }
        let mut stage_times: Vec<(String, Duration)> = Vec::new();
        let mut out = self.graph.execute_observed(weights, image, |node, dt| {
            let stage = node.stage();
            match stage_times.iter_mut().find(|(s, _)| s == stage) {
                Some((_, t)) => *t += dt,
                None => stage_times.push((stage.to_string(), dt)),
            }
        })?;
        let logits = take_tensor(&mut out, "logits")?;
        let labels = match out.remove("head/argmax") {
            Some(Value::Labels(l)) => l,
            _ => return Err(Error::graph("forward pass produced no label map")),
        };
        Ok(Prediction { logits, labels, stage_times })
    }
}

fn take_tensor(out: &mut BTreeMap<String, Value>, key: &str) -> Result<Tensor> {
    match out.remove(key) {
        Some(Value::Tensor(t)) => Ok(t),
        _ => Err(Error::graph(format!("forward pass produced no '{key}' tensor"))),
    }
}

/// Source, backbone, context encoder, decoder, and head, shape-checked at
/// the configured resolution.
pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    cfg.validate()?;
    let mut graph = Graph::new();
    let src = graph.add_input("input", 3)?;
    let taps = build_backbone(&mut graph, src, cfg.m, &cfg.dilation_rows).map_err(|e| e.in_stage("backbone"))?;

    let width = cfg.aggregation_width();
    let encoded = build_context_encoder(
        &mut graph,
        taps.os16,
        cfg.input_h / 16,
        cfg.input_w / 16,
        cfg.m,
        &cfg.encoder,
        width,
        cfg.resize_mode,
    )
    .map_err(|e| e.in_stage("encoder"))?;
    graph.set_tap("encoded", encoded)?;

    let head = HeadSpec {
        num_classes: cfg.num_classes,
        input_h: cfg.input_h,
        input_w: cfg.input_w,
        resize_mode: cfg.resize_mode,
        placement: cfg.classifier_placement,
    };
    let logits =
        build_decoder(&mut graph, encoded, width, &taps, &cfg.decoder, &head).map_err(|e| e.in_stage("decoder"))?;
    graph.set_tap("logits", logits)?;
    let labels = graph.add_node("head/argmax", Op::Argmax, &[logits])?;
    graph.add_output(labels)?;

    let shapes = graph
        .infer_shapes(TensorShape::new(cfg.input_h, cfg.input_w, 3)?)
        .map_err(|e| e.in_stage("shape inference"))?;
    Ok(Model { config: cfg.clone(), graph, shapes, taps, encoded, logits, labels })
}
