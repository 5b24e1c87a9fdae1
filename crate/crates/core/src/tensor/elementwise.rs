use super::{LabelMap, Tensor, TensorShape};
use crate::error::{Error, Result};

/// Concatenates along the channel axis in list order.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs.first().ok_or_else(|| Error::shape("concat_channels needs at least one input"))?.shape();
    for t in &inputs[1..] {
        if !t.shape().same_spatial(&first) {
            return Err(Error::shape(format!("concat_channels spatial mismatch: {first} vs {}", t.shape())));
        }
    }
    let c: usize = inputs.iter().map(|t| t.shape().c).sum();
    let out_shape = TensorShape { c, ..first };
    let mut out = Vec::with_capacity(out_shape.len());
    for r in 0..first.h {
        for q in 0..first.w {
            for t in inputs {
                out.extend_from_slice(t.pixel(r, q));
            }
        }
    }
    Tensor::new(out_shape, out)
}

/// Channels `start..start + len` of the input.
pub fn slice_channels(input: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let s = input.shape();
    if len == 0 || start + len > s.c {
        return Err(Error::shape(format!("channel slice {start}..{} out of range for {s}", start + len)));
    }
    let out = input.data().chunks_exact(s.c).flat_map(|px| px[start..start + len].iter().copied()).collect();
    Tensor::new(TensorShape { c: len, ..s }, out)
}

pub fn add_elementwise(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("add shape mismatch: {} vs {}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    let out = Tensor::new(a.shape(), data)?;
    out.ensure_finite("add")?;
    Ok(out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

/// `out[r, q, i] = scale[i] * in[r, q, i] + bias[i]`; the inference-time form
/// of a batch normalization layer.
pub fn affine_channels(input: &Tensor, scale: &[f32], bias: &[f32]) -> Result<Tensor> {
    let c = input.shape().c;
    if scale.len() != c || bias.len() != c {
        return Err(Error::shape(format!(
            "affine expects {c} scale and bias entries, got {} and {}",
            scale.len(),
            bias.len()
        )));
    }
    let mut data = Vec::with_capacity(input.data().len());
    for px in input.data().chunks_exact(c) {
        data.extend(px.iter().zip(scale).zip(bias).map(|((&x, &s), &b)| s * x + b));
    }
    let out = Tensor::new(input.shape(), data)?;
    out.ensure_finite("affine")?;
    Ok(out)
}

/// Index of the largest channel at every pixel; ties go to the lowest index.
pub fn argmax_channels(input: &Tensor) -> LabelMap {
    let s = input.shape();
    let labels = input
        .data()
        .chunks_exact(s.c)
        .map(|px| {
            let mut best = 0;
            for (i, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect();
    LabelMap::new(s.h, s.w, labels).expect("valid dimensions")
}
