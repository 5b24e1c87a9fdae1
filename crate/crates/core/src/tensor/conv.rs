use super::{ConvParams, Tensor, TensorShape};
use crate::error::{Error, Result};

/// Output length of one spatial dimension under SAME padding.
pub fn conv_output_len(input: usize, stride: usize) -> usize {
    input.div_ceil(stride)
}

/// Returns `(output_len, pad_before)` for one spatial dimension.
///
/// The total padding is split with the smaller half before the data and the
/// larger half after it.
pub fn same_padding(input: usize, kernel: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let out = conv_output_len(input, stride);
    let span = (kernel - 1) * dilation + 1;
    let needed = (out - 1) * stride + span;
    let total = needed.saturating_sub(input);
    (out, total / 2)
}

/// Precomputed input coordinate for every (output position, kernel tap) pair,
/// `None` where the tap falls in the zero padding.
fn tap_coords(input: usize, kernel: usize, stride: usize, dilation: usize) -> (usize, Vec<Option<usize>>) {
    let (out, pad) = same_padding(input, kernel, stride, dilation);
    let mut coords = Vec::with_capacity(out * kernel);
    for o in 0..out {
        for k in 0..kernel {
            let pos = (o * stride + k * dilation) as isize - pad as isize;
            coords.push((pos >= 0 && (pos as usize) < input).then_some(pos as usize));
        }
    }
    (out, coords)
}

fn check_input(input: &Tensor, params: &ConvParams, kernels: &[f32], op: &str) -> Result<TensorShape> {
    let out_shape = params.output_shape(input.shape())?;
    if kernels.len() != params.kernel_len() {
        return Err(Error::shape(format!(
            "{op}: expected {} kernel weights {:?}, got {}",
            params.kernel_len(),
            params.kernel_dims(),
            kernels.len()
        )));
    }
    input.ensure_finite(op)?;
    Ok(out_shape)
}

/// Grouped 2-D convolution with SAME zero padding.
///
/// `kernels` is laid out as `(kernel_h, kernel_w, in_c / groups, out_c)`;
/// output channel `o` belongs to group `o / (out_c / groups)` and only sees
/// that group's input channels.
pub fn conv2d(input: &Tensor, kernels: &[f32], bias: Option<&[f32]>, params: &ConvParams) -> Result<Tensor> {
    let out_shape = check_input(input, params, kernels, "conv2d")?;
    if let Some(b) = bias {
        if b.len() != params.out_c {
            return Err(Error::shape(format!("conv2d: bias has {} entries, expected {}", b.len(), params.out_c)));
        }
    }
    if params.is_depthwise() && params.groups > 1 {
        let mut out = depthwise_conv2d(input, kernels, params)?;
        if let Some(b) = bias {
            add_bias(&mut out, b);
            out.ensure_finite("conv2d")?;
        }
        return Ok(out);
    }

    let in_shape = input.shape();
    let (kh, kw) = (params.kernel_h, params.kernel_w);
    let (_, rows) = tap_coords(in_shape.h, kh, params.stride, params.dilation);
    let (_, cols) = tap_coords(in_shape.w, kw, params.stride, params.dilation);
    let cig = params.in_per_group();
    let cog = params.out_per_group();
    let out_c = params.out_c;

    let mut out = Vec::with_capacity(out_shape.len());
    let mut acc = vec![0f64; out_c];
    for oy in 0..out_shape.h {
        for ox in 0..out_shape.w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ky in 0..kh {
                let Some(iy) = rows[oy * kh + ky] else { continue };
                for kx in 0..kw {
                    let Some(ix) = cols[ox * kw + kx] else { continue };
                    let px = input.pixel(iy, ix);
                    let tap = &kernels[(ky * kw + kx) * cig * out_c..][..cig * out_c];
                    for g in 0..params.groups {
                        let acc_g = &mut acc[g * cog..(g + 1) * cog];
                        for ci in 0..cig {
                            let x = px[g * cig + ci] as f64;
                            let w = &tap[ci * out_c + g * cog..][..cog];
                            for (a, &wv) in acc_g.iter_mut().zip(w) {
                                *a += x * wv as f64;
                            }
                        }
                    }
                }
            }
            match bias {
                Some(b) => out.extend(acc.iter().zip(b).map(|(&a, &bv)| (a + bv as f64) as f32)),
                None => out.extend(acc.iter().map(|&a| a as f32)),
            }
        }
    }
    let out = Tensor::new(out_shape, out)?;
    out.ensure_finite("conv2d")?;
    Ok(out)
}

/// Depthwise convolution: channel `i` of the output is channel `i` of the
/// input convolved with its own `kernel_h x kernel_w` filter.
///
/// `kernels` is laid out as `(kernel_h, kernel_w, 1, channels)`.
pub fn depthwise_conv2d(input: &Tensor, kernels: &[f32], params: &ConvParams) -> Result<Tensor> {
    if params.in_c != input.shape().c {
        return Err(Error::shape(format!(
            "depthwise_conv2d: expected {} channels, got {}",
            params.in_c,
            input.shape()
        )));
    }
    if !params.is_depthwise() {
        return Err(Error::config(format!("depthwise_conv2d requires groups = in_c = out_c, got {params:?}")));
    }
    let out_shape = check_input(input, params, kernels, "depthwise_conv2d")?;
    let c = params.in_c;
    let (kh, kw) = (params.kernel_h, params.kernel_w);
    let (_, rows) = tap_coords(input.shape().h, kh, params.stride, params.dilation);
    let (_, cols) = tap_coords(input.shape().w, kw, params.stride, params.dilation);

    let mut out = Vec::with_capacity(out_shape.len());
    let mut acc = vec![0f64; c];
    for oy in 0..out_shape.h {
        for ox in 0..out_shape.w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ky in 0..kh {
                let Some(iy) = rows[oy * kh + ky] else { continue };
                for kx in 0..kw {
                    let Some(ix) = cols[ox * kw + kx] else { continue };
                    let px = input.pixel(iy, ix);
                    let w = &kernels[(ky * kw + kx) * c..][..c];
                    for ((a, &x), &wv) in acc.iter_mut().zip(px).zip(w) {
                        *a += x as f64 * wv as f64;
                    }
                }
            }
            out.extend(acc.iter().map(|&a| a as f32));
        }
    }
    let out = Tensor::new(out_shape, out)?;
    out.ensure_finite("depthwise_conv2d")?;
    Ok(out)
}

fn add_bias(t: &mut Tensor, bias: &[f32]) {
    let c = bias.len();
    for px in t.data_mut().chunks_exact_mut(c) {
        for (v, &b) in px.iter_mut().zip(bias) {
            *v = (*v as f64 + b as f64) as f32;
        }
    }
}
