//! The tailored MobileNet-Multi-Hardware feature extractor (output stride 16).

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Op};
use crate::tensor::ConvParams;

use super::{unit, Post};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowOp {
    Conv2d,
    Bneck,
}

/// One row of the backbone specification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BackboneRow {
    pub operator: RowOp,
    pub kernel: usize,
    pub exp_size: Option<usize>,
    pub out_c: usize,
    pub stride: usize,
    pub dilation: usize,
    /// Output stride at which this row's output is exposed as a tap.
    pub tap: Option<usize>,
}

/// Number of rows in the segmentation backbone.
pub const ROW_COUNT: usize = 18;

/// Rows of the trailing 5x5 stage, 1-based.
pub const DEFAULT_DILATION_ROWS: [usize; 3] = [15, 16, 17];

/// Output strides that have a tap usable by a decoder skip.
pub const SKIP_STRIDES: [usize; 3] = [8, 4, 2];

const fn conv(kernel: usize, out_c: usize, stride: usize, tap: Option<usize>) -> BackboneRow {
    BackboneRow { operator: RowOp::Conv2d, kernel, exp_size: None, out_c, stride, dilation: 1, tap }
}

const fn bneck(kernel: usize, exp: usize, out_c: usize, stride: usize, tap: Option<usize>) -> BackboneRow {
    BackboneRow { operator: RowOp::Bneck, kernel, exp_size: Some(exp), out_c, stride, dilation: 1, tap }
}

/// Row table with the endpoint width `m` and no dilation.
const fn base_rows(m: usize) -> [BackboneRow; ROW_COUNT] {
    [
        conv(3, 32, 2, Some(2)),
        bneck(3, 96, 32, 2, None),
        bneck(3, 64, 32, 1, Some(4)),
        bneck(5, 160, 64, 2, None),
        bneck(3, 192, 64, 1, None),
        bneck(3, 128, 64, 1, None),
        bneck(3, 192, 64, 1, Some(8)),
        bneck(5, 384, 128, 2, None),
        bneck(3, 384, 128, 1, None),
        bneck(3, 384, 128, 1, None),
        bneck(3, 384, 128, 1, None),
        bneck(3, 768, 160, 1, None),
        bneck(3, 640, 160, 1, None),
        bneck(3, 960, 192, 1, None),
        bneck(5, 384, 96, 1, None),
        bneck(5, 384, 96, 1, None),
        bneck(5, 384, 96, 1, None),
        conv(1, m, 1, Some(16)),
    ]
}

pub fn validate_dilation_rows(rows: &[usize]) -> Result<()> {
    let table = base_rows(1);
    for &r in rows {
        if r == 0 || r > ROW_COUNT {
            return Err(Error::config(format!("dilation_rows: row {r} is outside 1..={ROW_COUNT}")));
        }
        let row = table[r - 1];
        if row.operator != RowOp::Bneck || row.stride != 1 {
            return Err(Error::config(format!(
                "dilation_rows: row {r} is not a stride-1 bottleneck and cannot be dilated"
            )));
        }
    }
    Ok(())
}

/// The backbone rows for endpoint width `m`, with dilation 2 on the given
/// 1-based rows.
pub fn table_rows(m: usize, dilation_rows: &[usize]) -> Result<Vec<BackboneRow>> {
    if m == 0 {
        return Err(Error::config("m: must be positive"));
    }
    validate_dilation_rows(dilation_rows)?;
    let mut rows = base_rows(m).to_vec();
    for &r in dilation_rows {
        rows[r - 1].dilation = 2;
    }
    Ok(rows)
}

/// Backbone feature taps and their channel widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneTaps {
    pub os2: NodeId,
    pub os4: NodeId,
    pub os8: NodeId,
    pub os16: NodeId,
    pub m: usize,
}

impl BackboneTaps {
    pub fn get(&self, output_stride: usize) -> Option<NodeId> {
        match output_stride {
            2 => Some(self.os2),
            4 => Some(self.os4),
            8 => Some(self.os8),
            16 => Some(self.os16),
            _ => None,
        }
    }

    pub fn width(&self, output_stride: usize) -> Option<usize> {
        match output_stride {
            2 | 4 => Some(32),
            8 => Some(64),
            16 => Some(self.m),
            _ => None,
        }
    }
}

/// Inverted bottleneck: expand 1x1, depthwise, linear project 1x1, and a
/// residual add when the stride is 1 and the width is unchanged.
#[allow(clippy::too_many_arguments)]
pub fn build_bneck(
    graph: &mut Graph,
    prefix: &str,
    input: NodeId,
    in_c: usize,
    exp_size: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
) -> Result<NodeId> {
    if !matches!(stride, 1 | 2) {
        return Err(Error::config(format!("{prefix}: bottleneck stride {stride} must be 1 or 2")));
    }
    if !matches!(kernel, 3 | 5) {
        return Err(Error::config(format!("{prefix}: bottleneck kernel {kernel} must be 3 or 5")));
    }
    if !matches!(dilation, 1 | 2) {
        return Err(Error::config(format!("{prefix}: bottleneck dilation {dilation} must be 1 or 2")));
    }
    let expand = unit(
        graph,
        &format!("{prefix}/expand"),
        input,
        Op::Conv { params: ConvParams::pointwise(in_c, exp_size), bias: false },
        Post::Relu,
    )?;
    let dw = unit(
        graph,
        &format!("{prefix}/dw"),
        expand,
        Op::DepthwiseConv { params: ConvParams::depthwise(kernel, stride, dilation, exp_size) },
        Post::Relu,
    )?;
    let project = unit(
        graph,
        &format!("{prefix}/project"),
        dw,
        Op::Conv { params: ConvParams::pointwise(exp_size, out_c), bias: false },
        Post::Linear,
    )?;
    if stride == 1 && in_c == out_c {
        graph.add_node(format!("{prefix}/residual"), Op::Add, &[input, project])
    } else {
        Ok(project)
    }
}

/// Instantiates all backbone rows after `input` and registers the
/// `os2`/`os4`/`os8`/`os16` taps.
pub fn build_backbone(graph: &mut Graph, input: NodeId, m: usize, dilation_rows: &[usize]) -> Result<BackboneTaps> {
    match graph.node(input).op {
        Op::Input { channels: 3 } => {}
        ref op => return Err(Error::graph(format!("backbone needs a 3-channel source, got {op:?}"))),
    }
    let rows = table_rows(m, dilation_rows)?;
    let mut cur = input;
    let mut c = 3;
    let mut taps = [None; 4];
    for (i, row) in rows.iter().enumerate() {
        let n = i + 1;
        cur = match row.operator {
            RowOp::Conv2d => unit(
                graph,
                &format!("backbone/row{n:02}_conv/conv"),
                cur,
                Op::Conv {
                    params: ConvParams::standard(row.kernel, row.stride, c, row.out_c).with_dilation(row.dilation),
                    bias: false,
                },
                Post::Relu,
            )?,
            RowOp::Bneck => build_bneck(
                graph,
                &format!("backbone/row{n:02}_bneck"),
                cur,
                c,
                row.exp_size.unwrap_or(c),
                row.out_c,
                row.kernel,
                row.stride,
                row.dilation,
            )?,
        };
        c = row.out_c;
        if let Some(os) = row.tap {
            let slot = match os {
                2 => 0,
                4 => 1,
                8 => 2,
                _ => 3,
            };
            taps[slot] = Some(cur);
            graph.set_tap(format!("os{os}"), cur)?;
        }
    }
    let missing = || Error::graph("backbone table lacks a tap");
    Ok(BackboneTaps {
        os2: taps[0].ok_or_else(missing)?,
        os4: taps[1].ok_or_else(missing)?,
        os8: taps[2].ok_or_else(missing)?,
        os16: taps[3].ok_or_else(missing)?,
        m,
    })
}
