//! Computation graph of primitive operators.
//!
//! Nodes are appended one at a time and may only reference nodes that already
//! exist, so a graph is acyclic by construction. Composite blocks are lowered
//! to primitives when they are built; hierarchical names such as
//! `backbone/row04_bneck/expand` keep the block structure visible.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::io::WeightStore;
use crate::tensor::{self, ConvParams, LabelMap, ResizeMode, Tensor, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operator and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input { channels: usize },
    Conv { params: ConvParams, bias: bool },
    DepthwiseConv { params: ConvParams },
    AvgPoolGrid { grid_h: usize, grid_w: usize },
    GlobalPool,
    BilinearResize { out_h: usize, out_w: usize, mode: ResizeMode },
    ConcatChannels,
    SliceChannels { start: usize, len: usize },
    Add,
    Affine { channels: usize },
    Relu,
    Argmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Conv,
    DepthwiseConv,
    AvgPoolGrid,
    GlobalPool,
    BilinearResize,
    ConcatChannels,
    SliceChannels,
    Add,
    Affine,
    Relu,
    Argmax,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Input { .. } => OpKind::Input,
            Op::Conv { .. } => OpKind::Conv,
            Op::DepthwiseConv { .. } => OpKind::DepthwiseConv,
            Op::AvgPoolGrid { .. } => OpKind::AvgPoolGrid,
            Op::GlobalPool => OpKind::GlobalPool,
            Op::BilinearResize { .. } => OpKind::BilinearResize,
            Op::ConcatChannels => OpKind::ConcatChannels,
            Op::SliceChannels { .. } => OpKind::SliceChannels,
            Op::Add => OpKind::Add,
            Op::Affine { .. } => OpKind::Affine,
            Op::Relu => OpKind::Relu,
            Op::Argmax => OpKind::Argmax,
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Op::Input { .. } => n == 0,
            Op::ConcatChannels => n >= 1,
            Op::Add => n == 2,
            _ => n == 1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Op::Input { channels } if *channels == 0 => Err(Error::config("input needs at least one channel")),
            Op::Conv { params, .. } => params.validate(),
            Op::DepthwiseConv { params } => {
                params.validate()?;
                if params.is_depthwise() {
                    Ok(())
                } else {
                    Err(Error::config(format!("depthwise node needs groups = in_c = out_c, got {params:?}")))
                }
            }
            Op::AvgPoolGrid { grid_h, grid_w } if *grid_h == 0 || *grid_w == 0 => {
                Err(Error::config("pooling grid must be positive"))
            }
            Op::BilinearResize { out_h, out_w, .. } if *out_h == 0 || *out_w == 0 => {
                Err(Error::config("resize target must be positive"))
            }
            Op::SliceChannels { len, .. } if *len == 0 => Err(Error::config("empty channel slice")),
            Op::Affine { channels } if *channels == 0 => Err(Error::config("affine needs at least one channel")),
            _ => Ok(()),
        }
    }

    /// Short parameter summary used in graph listings.
    pub fn describe_params(&self) -> String {
        match self {
            Op::Input { channels } => format!("c={channels}"),
            Op::Conv { params: p, bias } => format!(
                "k={}x{} s={} d={} g={} {}->{}{}",
                p.kernel_h,
                p.kernel_w,
                p.stride,
                p.dilation,
                p.groups,
                p.in_c,
                p.out_c,
                if *bias { " bias" } else { "" }
            ),
            Op::DepthwiseConv { params: p } => {
                format!("k={}x{} s={} d={} c={}", p.kernel_h, p.kernel_w, p.stride, p.dilation, p.in_c)
            }
            Op::AvgPoolGrid { grid_h, grid_w } => format!("grid={grid_h}x{grid_w}"),
            Op::BilinearResize { out_h, out_w, mode } => format!("to={out_h}x{out_w} {mode:?}"),
            Op::SliceChannels { start, len } => format!("c={start}..{}", start + len),
            Op::Affine { channels } => format!("c={channels}"),
            Op::GlobalPool | Op::ConcatChannels | Op::Add | Op::Relu | Op::Argmax => "-".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
}

impl Node {
    /// Build stage, taken from the first component of the hierarchical name.
    pub fn stage(&self) -> &str {
        self.name.split('/').next().unwrap_or("")
    }

    /// Parameter tensors this node reads from a [`WeightStore`], as
    /// `(entry name, dims)`.
    pub fn param_slots(&self) -> Vec<(String, Vec<usize>)> {
        match &self.op {
            Op::Conv { params, bias } => {
                let mut slots = vec![(param_key(&self.name, "kernel"), params.kernel_dims().to_vec())];
                if *bias {
                    slots.push((param_key(&self.name, "bias"), vec![params.out_c]));
                }
                slots
            }
            Op::DepthwiseConv { params } => vec![(param_key(&self.name, "kernel"), params.kernel_dims().to_vec())],
            Op::Affine { channels } => vec![
                (param_key(&self.name, "scale"), vec![*channels]),
                (param_key(&self.name, "bias"), vec![*channels]),
            ],
            _ => Vec::new(),
        }
    }
}

/// Weight-store key of one parameter slot of a node.
pub fn param_key(node: &str, slot: &str) -> String {
    format!("{node}:{slot}")
}

/// Result of running a node: a feature map, or a label map for `Argmax`.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Tensor(Tensor),
    Labels(LabelMap),
}

impl Value {
    pub fn as_tensor(&self) -> Option<&Tensor> {
        match self {
            Value::Tensor(t) => Some(t),
            Value::Labels(_) => None,
        }
    }

    pub fn as_labels(&self) -> Option<&LabelMap> {
        match self {
            Value::Labels(l) => Some(l),
            Value::Tensor(_) => None,
        }
    }

    fn shape(&self) -> TensorShape {
        match self {
            Value::Tensor(t) => t.shape(),
            Value::Labels(l) => TensorShape { h: l.height(), w: l.width(), c: 1 },
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    source: Option<NodeId>,
    taps: BTreeMap<String, NodeId>,
    outputs: Vec<NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node. `inputs` must name nodes that already exist.
    pub fn add_node(&mut self, name: impl Into<String>, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let name = name.into();
        let id = NodeId(self.nodes.len());
        if self.by_name.contains_key(&name) {
            return Err(Error::graph(format!("duplicate node name '{name}'")));
        }
        for input in inputs {
            if *input == id {
                return Err(Error::graph(format!("cycle: node '{name}' references itself")));
            }
            if input.0 > id.0 {
                return Err(Error::graph(format!("node '{name}' references missing node #{}", input.0)));
            }
        }
        if !op.arity_ok(inputs.len()) {
            return Err(Error::graph(format!(
                "node '{name}' of kind {} cannot take {} inputs",
                op.kind(),
                inputs.len()
            )));
        }
        if matches!(op, Op::Input { .. }) && self.source.is_some() {
            return Err(Error::graph("graph already has a source node"));
        }
        op.validate()?;
        if matches!(op, Op::Input { .. }) {
            self.source = Some(id);
        }
        self.by_name.insert(name.clone(), id);
        self.nodes.push(Node { name, op, inputs: inputs.to_vec() });
        Ok(id)
    }

    pub fn add_input(&mut self, name: impl Into<String>, channels: usize) -> Result<NodeId> {
        self.add_node(name, Op::Input { channels }, &[])
    }

    pub fn set_tap(&mut self, name: impl Into<String>, node: NodeId) -> Result<()> {
        if node.0 >= self.nodes.len() {
            return Err(Error::graph(format!("tap references missing node #{}", node.0)));
        }
        self.taps.insert(name.into(), node);
        Ok(())
    }

    pub fn add_output(&mut self, node: NodeId) -> Result<()> {
        if node.0 >= self.nodes.len() {
            return Err(Error::graph(format!("output references missing node #{}", node.0)));
        }
        if !self.outputs.contains(&node) {
            self.outputs.push(node);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn source(&self) -> Option<NodeId> {
        self.source
    }

    pub fn tap(&self, name: &str) -> Option<NodeId> {
        self.taps.get(name).copied()
    }

    pub fn taps(&self) -> &BTreeMap<String, NodeId> {
        &self.taps
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.inputs.len()).sum()
    }

    /// Node order in which every node follows all of its inputs. Among ready
    /// nodes the earliest inserted goes first.
    pub fn topo_order(&self) -> Result<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut consumers = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for input in &node.inputs {
                indegree[i] += 1;
                consumers[input.0].push(i);
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(NodeId(i));
            for &c in &consumers[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() != n {
            return Err(Error::graph("cycle detected"));
        }
        Ok(order)
    }

    /// Assigns a shape to every node, failing on the first node whose
    /// preconditions do not hold.
    pub fn infer_shapes(&self, input_shape: TensorShape) -> Result<ShapeTable> {
        let mut shapes: Vec<Option<TensorShape>> = vec![None; self.nodes.len()];
        for id in self.topo_order()? {
            let node = &self.nodes[id.0];
            let ins: Vec<TensorShape> = node.inputs.iter().map(|i| shapes[i.0].expect("topological")).collect();
            let shape = op_shape(&node.op, &ins, input_shape).map_err(|e| e.at_node(&node.name))?;
            shapes[id.0] = Some(shape);
        }
        Ok(ShapeTable { shapes: shapes.into_iter().map(|s| s.expect("all nodes visited")).collect() })
    }

    /// Runs the graph on one image and returns the value of every output and
    /// tap, keyed by tap name or, for outputs, node name.
    pub fn execute(&self, weights: &WeightStore, input: &Tensor) -> Result<BTreeMap<String, Value>> {
        self.execute_observed(weights, input, |_, _| {})
    }

    /// Like [`Graph::execute`], calling `observe` with each node and the time
    /// spent in its kernel.
    pub fn execute_observed(
        &self,
        weights: &WeightStore,
        input: &Tensor,
        mut observe: impl FnMut(&Node, Duration),
    ) -> Result<BTreeMap<String, Value>> {
        let shapes = self.infer_shapes(input.shape())?;
        weights.validate_for(self)?;

        let order = self.topo_order()?;
        let mut keep = vec![false; self.nodes.len()];
        for id in self.taps.values().chain(&self.outputs) {
            keep[id.0] = true;
        }
        let mut remaining = vec![0usize; self.nodes.len()];
        for node in &self.nodes {
            for i in &node.inputs {
                remaining[i.0] += 1;
            }
        }

        let mut values: Vec<Option<Value>> = vec![None; self.nodes.len()];
        for id in order {
            let node = &self.nodes[id.0];
            let start = Instant::now();
            let value = {
                let args: Vec<&Value> =
                    node.inputs.iter().map(|i| values[i.0].as_ref().expect("input computed")).collect();
                run_node(node, &args, weights, input).map_err(|e| e.at_node(&node.name))?
            };
            observe(node, start.elapsed());
            debug_assert_eq!(value.shape(), shapes.get(id));
            values[id.0] = Some(value);
            for i in &node.inputs {
                remaining[i.0] -= 1;
                if remaining[i.0] == 0 && !keep[i.0] {
                    values[i.0] = None;
                }
            }
        }

        let mut out = BTreeMap::new();
        for (name, id) in &self.taps {
            out.insert(name.clone(), values[id.0].clone().expect("kept"));
        }
        for id in &self.outputs {
            out.insert(self.nodes[id.0].name.clone(), values[id.0].clone().expect("kept"));
        }
        Ok(out)
    }

    /// Line-oriented listing: name, kind, parameters, inputs, inferred shape.
    pub fn describe(&self, shapes: &ShapeTable) -> String {
        let mut s = String::new();
        let width = self.nodes.iter().map(|n| n.name.len()).max().unwrap_or(0);
        for (i, node) in self.nodes.iter().enumerate() {
            let inputs: Vec<&str> = node.inputs.iter().map(|id| self.nodes[id.0].name.as_str()).collect();
            let inputs = if inputs.is_empty() { "-".to_string() } else { inputs.join(",") };
            let _ = writeln!(
                s,
                "{:<width$}  {:<14} {:<32} in=[{}] shape={}",
                node.name,
                node.op.kind().to_string(),
                node.op.describe_params(),
                inputs,
                shapes.shapes[i],
            );
        }
        for (tap, id) in &self.taps {
            let _ = writeln!(s, "tap {tap} = {} shape={}", self.nodes[id.0].name, shapes.shapes[id.0]);
        }
        s
    }
}

/// Inferred shape of every node, indexed by [`NodeId`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTable {
    shapes: Vec<TensorShape>,
}

impl ShapeTable {
    pub fn get(&self, id: NodeId) -> TensorShape {
        self.shapes[id.0]
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, TensorShape)> + '_ {
        self.shapes.iter().enumerate().map(|(i, s)| (NodeId(i), *s))
    }
}

/// Output shape of `op` applied to inputs of the given shapes. The source
/// node takes `input_shape`.
pub(crate) fn op_shape(op: &Op, ins: &[TensorShape], input_shape: TensorShape) -> Result<TensorShape> {
    Ok(match op {
        Op::Input { channels } => {
            if input_shape.c != *channels {
                return Err(Error::shape(format!("source expects {channels} channels, got {input_shape}")));
            }
            input_shape
        }
        Op::Conv { params, .. } | Op::DepthwiseConv { params } => params.output_shape(ins[0])?,
        Op::AvgPoolGrid { grid_h, grid_w } => {
            if *grid_h > ins[0].h || *grid_w > ins[0].w {
                return Err(Error::config(format!("pooling grid {grid_h}x{grid_w} exceeds input {}", ins[0])));
            }
            TensorShape { h: *grid_h, w: *grid_w, ..ins[0] }
        }
        Op::GlobalPool => TensorShape { h: 1, w: 1, ..ins[0] },
        Op::BilinearResize { out_h, out_w, .. } => TensorShape { h: *out_h, w: *out_w, ..ins[0] },
        Op::ConcatChannels => {
            if let Some(bad) = ins.iter().find(|s| !s.same_spatial(&ins[0])) {
                return Err(Error::shape(format!("concat spatial mismatch: {} vs {bad}", ins[0])));
            }
            TensorShape { c: ins.iter().map(|s| s.c).sum(), ..ins[0] }
        }
        Op::SliceChannels { start, len } => {
            if start + len > ins[0].c {
                return Err(Error::shape(format!("slice {start}..{} exceeds {}", start + len, ins[0])));
            }
            TensorShape { c: *len, ..ins[0] }
        }
        Op::Add => {
            if ins[0] != ins[1] {
                return Err(Error::shape(format!("add mismatch: {} vs {}", ins[0], ins[1])));
            }
            ins[0]
        }
        Op::Affine { channels } => {
            if ins[0].c != *channels {
                return Err(Error::shape(format!("affine over {channels} channels applied to {}", ins[0])));
            }
            ins[0]
        }
        Op::Relu => ins[0],
        Op::Argmax => TensorShape { c: 1, ..ins[0] },
    })
}

fn param<'a>(weights: &'a WeightStore, node: &Node, slot: &str) -> Result<&'a [f32]> {
    let key = param_key(&node.name, slot);
    weights.get(&key).map(|e| e.data()).ok_or_else(|| Error::Weights(format!("missing weight entry '{key}'")))
}

fn run_node(node: &Node, args: &[&Value], weights: &WeightStore, input: &Tensor) -> Result<Value> {
    let tensor_arg = |i: usize| -> Result<&Tensor> {
        args[i].as_tensor().ok_or_else(|| Error::shape("operator expects a feature map, got a label map"))
    };
    let t = match &node.op {
        Op::Input { .. } => input.clone(),
        Op::Conv { params, bias } => {
            let b = if *bias { Some(param(weights, node, "bias")?) } else { None };
            tensor::conv2d(tensor_arg(0)?, param(weights, node, "kernel")?, b, params)?
        }
        Op::DepthwiseConv { params } => {
            tensor::depthwise_conv2d(tensor_arg(0)?, param(weights, node, "kernel")?, params)?
        }
        Op::AvgPoolGrid { grid_h, grid_w } => tensor::avg_pool_grid(tensor_arg(0)?, *grid_h, *grid_w)?,
        Op::GlobalPool => tensor::global_avg_pool(tensor_arg(0)?),
        Op::BilinearResize { out_h, out_w, mode } => tensor::bilinear_resize(tensor_arg(0)?, *out_h, *out_w, *mode)?,
        Op::ConcatChannels => {
            let ts = (0..args.len()).map(tensor_arg).collect::<Result<Vec<_>>>()?;
            tensor::concat_channels(&ts)?
        }
        Op::SliceChannels { start, len } => tensor::slice_channels(tensor_arg(0)?, *start, *len)?,
        Op::Add => tensor::add_elementwise(tensor_arg(0)?, tensor_arg(1)?)?,
        Op::Affine { .. } => {
            tensor::affine_channels(tensor_arg(0)?, param(weights, node, "scale")?, param(weights, node, "bias")?)?
        }
        Op::Relu => tensor::relu(tensor_arg(0)?),
        Op::Argmax => return Ok(Value::Labels(tensor::argmax_channels(tensor_arg(0)?))),
    };
    Ok(Value::Tensor(t))
}
