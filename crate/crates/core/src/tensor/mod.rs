//! Dense rank-3 feature maps and the reference kernels that operate on them.
//!
//! Every tensor is a single image laid out row-major by `(row, column,
//! channel)`, so the channel index varies fastest. Kernels are pure functions
//! of their arguments. Reductions accumulate in `f64` per output element in a
//! fixed order, which keeps results bitwise reproducible.

mod conv;
mod elementwise;
mod pool;
mod resize;

use std::fmt;

use crate::error::{Error, Result};

pub use conv::{conv2d, conv_output_len, depthwise_conv2d, same_padding};
pub use elementwise::{add_elementwise, affine_channels, argmax_channels, concat_channels, relu, slice_channels};
pub use pool::{avg_pool_grid, global_avg_pool, grid_bin};
pub use resize::{bilinear_resize, ResizeMode};

/// Height, width and channel count of a feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl TensorShape {
    pub fn new(h: usize, w: usize, c: usize) -> Result<Self> {
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::shape(format!("dimensions must be positive, got {h}x{w}x{c}")));
        }
        Ok(Self { h, w, c })
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn same_spatial(&self, other: &TensorShape) -> bool {
        self.h == other.h && self.w == other.w
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "buffer of {} values does not match shape {shape} ({} values)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: TensorShape, value: f32) -> Self {
        Self { shape, data: vec![value; shape.len()] }
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` at every element.
    pub fn from_fn(shape: TensorShape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..shape.h {
            for q in 0..shape.w {
                for ch in 0..shape.c {
                    data.push(f(r, q, ch));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, r: usize, q: usize, ch: usize) -> usize {
        (r * self.shape.w + q) * self.shape.c + ch
    }

    #[inline]
    pub fn get(&self, r: usize, q: usize, ch: usize) -> f32 {
        self.data[self.index(r, q, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, q: usize, ch: usize, value: f32) {
        let i = self.index(r, q, ch);
        self.data[i] = value;
    }

    /// Channel vector at one spatial position.
    #[inline]
    pub fn pixel(&self, r: usize, q: usize) -> &[f32] {
        let start = self.index(r, q, 0);
        &self.data[start..start + self.shape.c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!("{op}: non-finite value {} at flat index {i}", self.data[i]))),
        }
    }
}

/// Hyper-parameters of a (possibly grouped or depthwise) convolution.
///
/// Padding is always SAME with zero fill; see [`same_padding`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvParams {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub in_c: usize,
    pub out_c: usize,
}

impl ConvParams {
    /// Square, ungrouped convolution.
    pub fn standard(kernel: usize, stride: usize, in_c: usize, out_c: usize) -> Self {
        Self { kernel_h: kernel, kernel_w: kernel, stride, dilation: 1, groups: 1, in_c, out_c }
    }

    pub fn pointwise(in_c: usize, out_c: usize) -> Self {
        Self::standard(1, 1, in_c, out_c)
    }

    /// Square depthwise convolution over `channels` channels.
    pub fn depthwise(kernel: usize, stride: usize, dilation: usize, channels: usize) -> Self {
        Self { kernel_h: kernel, kernel_w: kernel, stride, dilation, groups: channels, in_c: channels, out_c: channels }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_c && self.in_c == self.out_c
    }

    pub fn in_per_group(&self) -> usize {
        self.in_c / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_c / self.groups
    }

    /// Number of kernel weights, laid out as `(kernel_h, kernel_w, in_c / groups, out_c)`.
    pub fn kernel_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_per_group() * self.out_c
    }

    pub fn kernel_dims(&self) -> [usize; 4] {
        [self.kernel_h, self.kernel_w, self.in_per_group(), self.out_c]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.kernel_h, self.kernel_w, self.stride, self.dilation, self.groups, self.in_c, self.out_c];
        if positive.contains(&0) {
            return Err(Error::config(format!("convolution parameters must be positive: {self:?}")));
        }
        if !self.in_c.is_multiple_of(self.groups) || !self.out_c.is_multiple_of(self.groups) {
            return Err(Error::config(format!(
                "groups={} must divide in_c={} and out_c={}",
                self.groups, self.in_c, self.out_c
            )));
        }
        Ok(())
    }

    /// Output shape under SAME padding.
    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape> {
        self.validate()?;
        if input.c != self.in_c {
            return Err(Error::shape(format!("convolution expects {} input channels, got {input}", self.in_c)));
        }
        Ok(TensorShape {
            h: conv_output_len(input.h, self.stride),
            w: conv_output_len(input.w, self.stride),
            c: self.out_c,
        })
    }
}

/// Per-pixel class indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    h: usize,
    w: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, labels: Vec<u32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::shape(format!("label map dimensions must be positive, got {h}x{w}")));
        }
        if labels.len() != h * w {
            return Err(Error::shape(format!("label map {h}x{w} needs {} labels, got {}", h * w, labels.len())));
        }
        Ok(Self { h, w, labels })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, r: usize, q: usize) -> u32 {
        self.labels[r * self.w + q]
    }

    /// Checks that every label is below `k`.
    pub fn check_range(&self, k: u32) -> Result<()> {
        match self.labels.iter().position(|&l| l >= k) {
            None => Ok(()),
            Some(i) => Err(Error::shape(format!("label {} at pixel {i} is outside [0, {k})", self.labels[i]))),
        }
    }
}
