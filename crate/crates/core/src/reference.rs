//! Published multiply-add totals (billions) used as reconciliation targets.

/// Headline configuration at 1024x2048.
pub const HEADLINE_MADDS_B: f64 = 20.86;

/// 448-wide, 32-class configuration at 512x512.
pub const ADE_MADDS_B: f64 = 2.98;

/// `(enc_filters/dec_filters, total)` for the filter-width ablation.
pub const FILTER_MADDS_B: &[(&str, f64)] = &[
    ("32/16", 20.31),
    ("32/32", 20.60),
    ("32/64", 20.86),
    ("64/16", 21.01),
    ("64/32", 21.19),
    ("64/64", 21.55),
    ("64/128", 22.29),
    ("16/64", 20.59),
    ("128/64", 23.55),
];

/// `(bins[:group conv flag], total)` for the pyramid ablation.
pub const PYRAMID_MADDS_B: &[(&str, f64)] = &[
    ("1,4", 20.79),
    ("4,8", 20.81),
    ("4,16", 20.81),
    ("8,16", 20.82),
    ("4,8,16", 20.86),
    ("4,8,16:N", 20.87),
    ("1,4,8,16", 20.88),
];

/// `(skip list, total)` for the decoder ablation.
pub const SKIP_MADDS_B: &[(&str, f64)] = &[
    ("0", 20.108),
    ("4-S", 20.270),
    ("4-C", 21.465),
    ("8-C", 20.708),
    ("8-C,4-S", 20.860),
    ("8-S,4-S", 20.390),
    ("8-C,4-C", 21.685),
    ("8-C,4-S,2-S", 21.186),
];

/// Published cost of adding the `4-S` skip to the skip-free decoder.
pub const SUM_SKIP_DELTA_B: f64 = 20.270 - 20.108;

/// Pairs `(i, j)` whose published values differ but whose computed values
/// are not ordered the same way (ties count as violations).
pub fn ordering_violations(published: &[f64], computed: &[u64]) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for i in 0..published.len() {
        for j in i + 1..published.len() {
            if published[i] == published[j] {
                continue;
            }
            let want = published[i] < published[j];
            if computed[i] == computed[j] || (computed[i] < computed[j]) != want {
                bad.push((i, j));
            }
        }
    }
    bad
}

/// `(got - want) / want`.
pub fn relative_gap(got: f64, want: f64) -> f64 {
    (got - want) / want
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violations() {
        assert!(ordering_violations(&[1.0, 2.0, 3.0], &[5, 6, 7]).is_empty());
        assert_eq!(ordering_violations(&[1.0, 2.0, 3.0], &[5, 8, 7]), vec![(1, 2)]);
        assert_eq!(ordering_violations(&[1.0, 2.0], &[5, 5]), vec![(0, 1)]);
        assert!(ordering_violations(&[2.0, 2.0], &[9, 5]).is_empty());
    }
}
