//! Analytical multiply-add and parameter counts.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::arch::{build_model, parse_skips, skips_label, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{op_shape, Graph, Op};
use crate::tensor::TensorShape;

/// Which operators contribute multiply-adds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CountingPolicy {
    /// Convolutions only: one per multiply-accumulate.
    #[default]
    Standard,
    /// Also one per affine element, addition, pooled input element and
    /// classifier bias, and four per bilinear output element.
    IncludeEverything,
}

impl FromStr for CountingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "include-everything" => Ok(Self::IncludeEverything),
            _ => Err(Error::config(format!("policy: '{s}' is not standard | include-everything"))),
        }
    }
}

/// Multiply-adds and parameters of one operator given its input and output
/// shapes. Fails if the shapes do not follow from the operator.
pub fn count_node(op: &Op, ins: &[TensorShape], out: TensorShape, policy: CountingPolicy) -> Result<(u64, u64)> {
    let source = match op {
        Op::Input { .. } => out,
        _ => ins.first().copied().unwrap_or(out),
    };
    let expected = op_shape(op, ins, source)?;
    if expected != out {
        return Err(Error::shape(format!("{:?} produces {expected}, not {out}", op.kind())));
    }
    let all = policy == CountingPolicy::IncludeEverything;
    let elems = out.len() as u64;
    let pixels = out.pixels() as u64;
    Ok(match op {
        Op::Conv { params: p, bias } => {
            let taps = (p.kernel_h * p.kernel_w * p.in_per_group()) as u64;
            let mut madds = pixels * p.out_c as u64 * taps;
            let mut params = taps * p.out_c as u64;
            if *bias {
                params += p.out_c as u64;
                if all {
                    madds += elems;
                }
            }
            (madds, params)
        }
        Op::DepthwiseConv { params: p } => {
            let taps = (p.kernel_h * p.kernel_w) as u64;
            (pixels * p.out_c as u64 * taps, taps * p.out_c as u64)
        }
        Op::Affine { channels } => (if all { elems } else { 0 }, 2 * *channels as u64),
        Op::Add if all => (elems, 0),
        Op::AvgPoolGrid { .. } | Op::GlobalPool if all => (ins[0].len() as u64, 0),
        Op::BilinearResize { .. } if all => (4 * elems, 0),
        _ => (0, 0),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeCost {
    pub name: String,
    pub stage: String,
    pub madds: u64,
    pub params: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub per_node: Vec<NodeCost>,
    pub total_madds: u64,
    pub total_params: u64,
    pub input_resolution: (usize, usize),
    pub policy: CountingPolicy,
}

/// `x` in billions with two decimals.
pub fn billions(x: u64) -> String {
    format!("{:.2}", x as f64 / 1e9)
}

impl CostReport {
    /// `(stage, madds, params)` in build order.
    pub fn stage_subtotals(&self) -> Vec<(String, u64, u64)> {
        let mut out: Vec<(String, u64, u64)> = Vec::new();
        for n in &self.per_node {
            match out.iter_mut().find(|(s, _, _)| *s == n.stage) {
                Some((_, m, p)) => {
                    *m += n.madds;
                    *p += n.params;
                }
                None => out.push((n.stage.clone(), n.madds, n.params)),
            }
        }
        out
    }

    /// Sum over nodes whose names start with `prefix`.
    pub fn subtotal(&self, prefix: &str) -> (u64, u64) {
        self.per_node
            .iter()
            .filter(|n| n.name.starts_with(prefix))
            .fold((0, 0), |(m, p), n| (m + n.madds, p + n.params))
    }

    pub fn get(&self, name: &str) -> Option<&NodeCost> {
        self.per_node.iter().find(|n| n.name == name)
    }

    /// Aligned table of nodes with nonzero cost, stage subtotals and total.
    pub fn render_text(&self) -> String {
        let mut rows: Vec<(String, u64, u64)> = self
            .per_node
            .iter()
            .filter(|n| n.madds > 0 || n.params > 0)
            .map(|n| (n.name.clone(), n.madds, n.params))
            .collect();
        rows.extend(self.stage_subtotals().into_iter().map(|(s, m, p)| (format!("stage:{s}"), m, p)));
        rows.push(("total".to_string(), self.total_madds, self.total_params));
        let (h, w) = self.input_resolution;
        let mut s = format!("input {h}x{w}, policy {:?}\n", self.policy);
        s.push_str(&render_rows(&rows));
        s
    }

    /// CSV with columns `label,madds,madds_B,params`: every node, then
    /// `stage:<name>` subtotals, then `total`.
    pub fn render_csv(&self) -> String {
        let mut rows: Vec<(String, u64, u64)> =
            self.per_node.iter().map(|n| (n.name.clone(), n.madds, n.params)).collect();
        rows.extend(self.stage_subtotals().into_iter().map(|(s, m, p)| (format!("stage:{s}"), m, p)));
        rows.push(("total".to_string(), self.total_madds, self.total_params));
        render_csv_rows(&rows)
    }
}

fn render_rows(rows: &[(String, u64, u64)]) -> String {
    let lw = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<lw$}  {:>15}  {:>8}  {:>12}\n", "label", "madds", "madds_B", "params");
    for (label, m, p) in rows {
        let _ = writeln!(s, "{label:<lw$}  {m:>15}  {:>8}  {p:>12}", billions(*m));
    }
    s
}

fn render_csv_rows(rows: &[(String, u64, u64)]) -> String {
    let mut s = String::from("label,madds,madds_B,params\n");
    for (label, m, p) in rows {
        let label =
            if label.contains([',', '"']) { format!("\"{}\"", label.replace('"', "\"\"")) } else { label.clone() };
        let _ = writeln!(s, "{label},{m},{},{p}", billions(*m));
    }
    s
}

/// Counts every node of `graph` at the given source shape.
pub fn count_graph(graph: &Graph, input: TensorShape, policy: CountingPolicy) -> Result<CostReport> {
    let shapes = graph.infer_shapes(input)?;
    let mut per_node = Vec::with_capacity(graph.len());
    for (i, node) in graph.nodes().iter().enumerate() {
        let ins: Vec<TensorShape> = node.inputs.iter().map(|&id| shapes.get(id)).collect();
        let (madds, params) = count_node(&node.op, &ins, shapes.get(crate::graph::NodeId(i)), policy)
            .map_err(|e| e.at_node(&node.name))?;
        per_node.push(NodeCost { name: node.name.clone(), stage: node.stage().to_string(), madds, params });
    }
    Ok(CostReport {
        total_madds: per_node.iter().map(|n| n.madds).sum(),
        total_params: per_node.iter().map(|n| n.params).sum(),
        per_node,
        input_resolution: (input.h, input.w),
        policy,
    })
}

/// Counts a built model at its configured resolution.
pub fn count_model(model: &Model, policy: CountingPolicy) -> Result<CostReport> {
    count_graph(&model.graph, model.input_shape(), policy)
}

/// Builds `cfg` at `h x w` and counts it.
pub fn count_config(cfg: &ModelConfig, h: usize, w: usize, policy: CountingPolicy) -> Result<CostReport> {
    let model = build_model(&cfg.clone().with_resolution(h, w))?;
    count_model(&model, policy)
}

/// Configuration dimension swept by [`ablation_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationAxis {
    /// Variants are encoder widths, e.g. `64`.
    EncoderFilters,
    /// Variants are decoder widths.
    DecoderFilters,
    /// Variants are `enc/dec` width pairs, e.g. `32/64`.
    Filters,
    /// Variants are bin lists with an optional group-conv flag, e.g.
    /// `4,8,16` or `4,8,16:N`.
    Pyramid,
    /// Variants are skip lists, e.g. `8-C,4-S` or `0`.
    Skips,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder_filters" => Ok(Self::EncoderFilters),
            "decoder_filters" => Ok(Self::DecoderFilters),
            "filters" => Ok(Self::Filters),
            "pyramid" => Ok(Self::Pyramid),
            "skips" => Ok(Self::Skips),
            _ => Err(Error::config(format!(
                "axis: '{s}' is not encoder_filters | decoder_filters | filters | pyramid | skips"
            ))),
        }
    }
}

/// Applies one variant to a copy of `base`.
pub fn apply_variant(base: &ModelConfig, axis: AblationAxis, variant: &str) -> Result<ModelConfig> {
    let mut cfg = base.clone();
    let v = variant.trim();
    match axis {
        AblationAxis::EncoderFilters => cfg.set("enc_filters", v)?,
        AblationAxis::DecoderFilters => cfg.set("dec_filters", v)?,
        AblationAxis::Filters => {
            let (e, d) =
                v.split_once('/').ok_or_else(|| Error::config(format!("filters: '{v}' is not <enc>/<dec>")))?;
            cfg.set("enc_filters", e.trim())?;
            cfg.set("dec_filters", d.trim())?;
        }
        AblationAxis::Pyramid => {
            let (bins, gc) = match v.split_once(':') {
                Some((b, g)) => (b, Some(g)),
                None => (v, None),
            };
            cfg.set("pyramid_bins", bins.trim())?;
            if let Some(g) = gc {
                cfg.set("use_group_conv", g.trim())?;
            }
        }
        AblationAxis::Skips => cfg.decoder.skips = parse_skips(v)?,
    }
    Ok(cfg)
}

/// Row label in the ablation tables' style.
pub fn variant_label(cfg: &ModelConfig, axis: AblationAxis) -> String {
    let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    match axis {
        AblationAxis::EncoderFilters => cfg.encoder.enc_filters.to_string(),
        AblationAxis::DecoderFilters => cfg.decoder.dec_filters.to_string(),
        AblationAxis::Filters => format!("{}/{}", cfg.encoder.enc_filters, cfg.decoder.dec_filters),
        AblationAxis::Pyramid => format!(
            "{} [{}] {}",
            cfg.encoder.pyramid_bins.len(),
            list(&cfg.encoder.pyramid_bins),
            if cfg.encoder.use_group_conv { "Y" } else { "N" }
        ),
        AblationAxis::Skips => skips_label(&cfg.decoder.skips),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AblationRow {
    pub label: String,
    pub madds: u64,
    pub params: u64,
}

/// One total per variant, in input order.
pub fn ablation_report(
    base: &ModelConfig,
    axis: AblationAxis,
    variants: &[String],
    policy: CountingPolicy,
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(Error::config("variants: the list is empty"));
    }
    variants
        .iter()
        .map(|v| {
            let named = |e: Error| Error::config(format!("variant '{v}': {e}"));
            let cfg = apply_variant(base, axis, v).map_err(named)?;
            let model = build_model(&cfg).map_err(named)?;
            let report = count_model(&model, policy)?;
            Ok(AblationRow { label: variant_label(&cfg, axis), madds: report.total_madds, params: report.total_params })
        })
        .collect()
}

pub fn render_ablation_text(rows: &[AblationRow]) -> String {
    render_rows(&rows.iter().map(|r| (r.label.clone(), r.madds, r.params)).collect::<Vec<_>>())
}

pub fn render_ablation_csv(rows: &[AblationRow]) -> String {
    render_csv_rows(&rows.iter().map(|r| (r.label.clone(), r.madds, r.params)).collect::<Vec<_>>())
}
