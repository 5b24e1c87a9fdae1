use std::ops::Range;

use super::{Tensor, TensorShape};
use crate::error::{Error, Result};

/// Index range of bin `i` when `len` cells are split into `bins` bins.
///
/// Bin boundaries are `floor(i * len / bins)`, so bins are disjoint, cover
/// every cell, and differ in size by at most one.
pub fn grid_bin(i: usize, len: usize, bins: usize) -> Range<usize> {
    (i * len / bins)..((i + 1) * len / bins)
}

/// Average pooling onto a fixed `grid_h x grid_w` grid.
pub fn avg_pool_grid(input: &Tensor, grid_h: usize, grid_w: usize) -> Result<Tensor> {
    let s = input.shape();
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::config(format!("pooling grid must be positive, got {grid_h}x{grid_w}")));
    }
    if grid_h > s.h || grid_w > s.w {
        return Err(Error::config(format!("pooling grid {grid_h}x{grid_w} exceeds input {}x{}", s.h, s.w)));
    }
    let out_shape = TensorShape { h: grid_h, w: grid_w, c: s.c };
    let mut out = Vec::with_capacity(out_shape.len());
    let mut acc = vec![0f64; s.c];
    for i in 0..grid_h {
        let rows = grid_bin(i, s.h, grid_h);
        for j in 0..grid_w {
            let cols = grid_bin(j, s.w, grid_w);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for r in rows.clone() {
                for q in cols.clone() {
                    for (a, &v) in acc.iter_mut().zip(input.pixel(r, q)) {
                        *a += v as f64;
                    }
                }
            }
            let n = (rows.len() * cols.len()) as f64;
            out.extend(acc.iter().map(|&a| (a / n) as f32));
        }
    }
    Tensor::new(out_shape, out)
}

/// Mean over all spatial positions; output is `1 x 1 x c`.
pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let mut acc = vec![0f64; s.c];
    for px in input.data().chunks_exact(s.c) {
        for (a, &v) in acc.iter_mut().zip(px) {
            *a += v as f64;
        }
    }
    let n = s.pixels() as f64;
    let data = acc.iter().map(|&a| (a / n) as f32).collect();
    Tensor::new(TensorShape { h: 1, w: 1, c: s.c }, data).expect("1x1xc buffer")
}
