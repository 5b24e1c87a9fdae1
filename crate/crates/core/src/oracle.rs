//! Brute-force reference implementations.
//!
//! These are written as plain nested loops over the mathematical definitions
//! and share no code with the kernels in [`crate::tensor`] or the metric in
//! [`crate::io`]. They back the unit tests, the acceptance suite, and the
//! `selftest` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{ConvParams, LabelMap, ResizeMode, Tensor, TensorShape};

/// Direct convolution with explicit zero padding.
///
/// Returns the output together with the number of scalar multiplications
/// performed, padding taps included.
pub fn conv2d(input: &Tensor, kernels: &[f32], bias: Option<&[f32]>, p: &ConvParams) -> (Tensor, u64) {
    let s = input.shape();
    let out_h = s.h.div_ceil(p.stride);
    let out_w = s.w.div_ceil(p.stride);
    let pad_total = |len: usize, out: usize, k: usize| {
        let need = (out - 1) * p.stride + (k - 1) * p.dilation + 1;
        need.saturating_sub(len)
    };
    let pad_top = (pad_total(s.h, out_h, p.kernel_h) / 2) as i64;
    let pad_left = (pad_total(s.w, out_w, p.kernel_w) / 2) as i64;
    let cig = p.in_c / p.groups;
    let cog = p.out_c / p.groups;
    let mut mults = 0u64;
    let mut out = Tensor::zeros(TensorShape { h: out_h, w: out_w, c: p.out_c });
    for oy in 0..out_h {
        for ox in 0..out_w {
            for co in 0..p.out_c {
                let g = co / cog;
                let mut acc = 0f64;
                for ky in 0..p.kernel_h {
                    for kx in 0..p.kernel_w {
                        for ci in 0..cig {
                            let iy = (oy * p.stride + ky * p.dilation) as i64 - pad_top;
                            let ix = (ox * p.stride + kx * p.dilation) as i64 - pad_left;
                            let x = if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                                input.get(iy as usize, ix as usize, g * cig + ci) as f64
                            } else {
                                0.0
                            };
                            let w = kernels[((ky * p.kernel_w + kx) * cig + ci) * p.out_c + co] as f64;
                            acc += x * w;
                            mults += 1;
                        }
                    }
                }
                if let Some(b) = bias {
                    acc += b[co] as f64;
                }
                out.set(oy, ox, co, acc as f32);
            }
        }
    }
    (out, mults)
}

/// Expands a grouped kernel into an ungrouped one that is zero outside the
/// diagonal channel blocks.
pub fn block_masked_kernel(kernels: &[f32], p: &ConvParams) -> Vec<f32> {
    let cig = p.in_c / p.groups;
    let cog = p.out_c / p.groups;
    let mut full = vec![0f32; p.kernel_h * p.kernel_w * p.in_c * p.out_c];
    for tap in 0..p.kernel_h * p.kernel_w {
        for ci_full in 0..p.in_c {
            for co in 0..p.out_c {
                let g = co / cog;
                if ci_full / cig == g {
                    let ci = ci_full % cig;
                    full[(tap * p.in_c + ci_full) * p.out_c + co] = kernels[(tap * cig + ci) * p.out_c + co];
                }
            }
        }
    }
    full
}

/// Grid pooling by testing every input cell for membership in every bin.
pub fn avg_pool_grid(input: &Tensor, grid_h: usize, grid_w: usize) -> Tensor {
    let s = input.shape();
    let mut out = Tensor::zeros(TensorShape { h: grid_h, w: grid_w, c: s.c });
    for i in 0..grid_h {
        for j in 0..grid_w {
            for ch in 0..s.c {
                let mut sum = 0f64;
                let mut n = 0usize;
                for r in 0..s.h {
                    // floor(i*h/G) <= r < floor((i+1)*h/G)  <=>  i*h < (r+1)*G <= (i+1)*h
                    if !(i * s.h < (r + 1) * grid_h && (r + 1) * grid_h <= (i + 1) * s.h) {
                        continue;
                    }
                    for q in 0..s.w {
                        if j * s.w < (q + 1) * grid_w && (q + 1) * grid_w <= (j + 1) * s.w {
                            sum += input.get(r, q, ch) as f64;
                            n += 1;
                        }
                    }
                }
                out.set(i, j, ch, (sum / n as f64) as f32);
            }
        }
    }
    out
}

/// Bilinear interpolation evaluated one output element at a time.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize, mode: ResizeMode) -> Tensor {
    let s = input.shape();
    let coord = |d: usize, n_in: usize, n_out: usize| -> f64 {
        match mode {
            ResizeMode::AlignCorners if n_out == 1 => 0.0,
            ResizeMode::AlignCorners => d as f64 * (n_in as f64 - 1.0) / (n_out as f64 - 1.0),
            ResizeMode::HalfPixel => {
                ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0).min(n_in as f64 - 1.0)
            }
        }
    };
    let mut out = Tensor::zeros(TensorShape { h: out_h, w: out_w, c: s.c });
    for y in 0..out_h {
        for x in 0..out_w {
            let sy = coord(y, s.h, out_h);
            let sx = coord(x, s.w, out_w);
            for ch in 0..s.c {
                // weight of each source sample is the product of 1-D hat functions
                let mut v = 0f64;
                for r in 0..s.h {
                    let wy = (1.0 - (sy - r as f64).abs()).max(0.0);
                    if wy == 0.0 {
                        continue;
                    }
                    for q in 0..s.w {
                        let wx = (1.0 - (sx - q as f64).abs()).max(0.0);
                        v += wy * wx * input.get(r, q, ch) as f64;
                    }
                }
                out.set(y, x, ch, v as f32);
            }
        }
    }
    out
}

/// Per-pixel argmax with the first maximum winning.
pub fn argmax(input: &Tensor) -> Vec<u32> {
    let s = input.shape();
    let mut labels = Vec::new();
    for r in 0..s.h {
        for q in 0..s.w {
            let mut best = 0;
            for ch in 0..s.c {
                if input.get(r, q, ch) > input.get(r, q, best) {
                    best = ch;
                }
            }
            labels.push(best as u32);
        }
    }
    labels
}

/// Mean IoU from an explicit `k x k` confusion matrix.
pub fn miou_confusion(pred: &LabelMap, gt: &LabelMap, k: usize, ignore: Option<u32>) -> f64 {
    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if Some(g) == ignore {
            continue;
        }
        confusion[g as usize][p as usize] += 1;
    }
    let mut total = 0f64;
    let mut present = 0usize;
    for (c, row) in confusion.iter().enumerate() {
        let tp = row[c];
        let gt_count: u64 = row.iter().sum();
        let pred_count: u64 = confusion.iter().map(|r| r[c]).sum();
        let union = gt_count + pred_count - tp;
        if union > 0 {
            total += tp as f64 / union as f64;
            present += 1;
        }
    }
    if present == 0 {
        1.0
    } else {
        total / present as f64
    }
}

/// Maximum elementwise relative error, with the denominator floored at 1 so
/// values near zero are compared absolutely.
pub fn max_rel_error(got: &Tensor, want: &Tensor) -> f64 {
    assert_eq!(got.shape(), want.shape(), "shape mismatch");
    got.data()
        .iter()
        .zip(want.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs() / (b as f64).abs().max(1.0))
        .fold(0.0, f64::max)
}

#[track_caller]
pub fn assert_close(got: &Tensor, want: &Tensor, tol: f64) {
    let err = max_rel_error(got, want);
    assert!(err <= tol, "max relative error {err:e} exceeds {tol:e}");
}

/// Tensor of uniform values in `[-1, 1)`.
pub fn random_tensor(rng: &mut impl Rng, shape: TensorShape) -> Tensor {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Tensor::new(shape, data).expect("matching length")
}

pub fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
