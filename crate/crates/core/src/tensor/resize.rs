use super::{Tensor, TensorShape};
use crate::error::{Error, Result};

/// Sampling convention for bilinear resizing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ResizeMode {
    /// Corners of input and output grids coincide:
    /// `src = dst * (in - 1) / (out - 1)`, and `src = 0` when `out == 1`.
    #[default]
    AlignCorners,
    /// Pixel centres coincide: `src = (dst + 0.5) * in / out - 0.5`, clamped.
    HalfPixel,
}

impl ResizeMode {
    pub fn source_coord(self, dst: usize, in_len: usize, out_len: usize) -> f64 {
        match self {
            ResizeMode::AlignCorners => {
                if out_len == 1 {
                    0.0
                } else {
                    (dst * (in_len - 1)) as f64 / (out_len - 1) as f64
                }
            }
            ResizeMode::HalfPixel => {
                let s = (dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
                s.clamp(0.0, (in_len - 1) as f64)
            }
        }
    }
}

struct Sample {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn samples(mode: ResizeMode, in_len: usize, out_len: usize) -> Vec<Sample> {
    (0..out_len)
        .map(|d| {
            let s = mode.source_coord(d, in_len, out_len);
            let lo = (s.floor() as usize).min(in_len - 1);
            Sample { lo, hi: (lo + 1).min(in_len - 1), frac: s - lo as f64 }
        })
        .collect()
}

/// Bilinear interpolation to `out_h x out_w`.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape(format!("resize target must be positive, got {out_h}x{out_w}")));
    }
    let s = input.shape();
    if s.h == out_h && s.w == out_w {
        return Ok(input.clone());
    }
    let ys = samples(mode, s.h, out_h);
    let xs = samples(mode, s.w, out_w);
    let out_shape = TensorShape { h: out_h, w: out_w, c: s.c };
    let mut out = Vec::with_capacity(out_shape.len());
    for y in &ys {
        for x in &xs {
            let (a, b) = (input.pixel(y.lo, x.lo), input.pixel(y.lo, x.hi));
            let (c, d) = (input.pixel(y.hi, x.lo), input.pixel(y.hi, x.hi));
            for ch in 0..s.c {
                let top = (1.0 - x.frac) * a[ch] as f64 + x.frac * b[ch] as f64;
                let bottom = (1.0 - x.frac) * c[ch] as f64 + x.frac * d[ch] as f64;
                out.push(((1.0 - y.frac) * top + y.frac * bottom) as f32);
            }
        }
    }
    Tensor::new(out_shape, out)
}
