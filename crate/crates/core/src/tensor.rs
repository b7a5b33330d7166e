//! Index arithmetic and mode products on row-major tensors with all extents `q`.

use crate::scheme::{FactorMatrix, FactorStructure};

/// Row-major digits of `index` in base `q`; `out.len()` fixes the tuple length.
pub(crate) fn decode(mut index: usize, q: usize, out: &mut [usize]) {
    for d in out.iter_mut().rev() {
        *d = index % q;
        index /= q;
    }
}

pub(crate) fn encode(digits: &[usize], q: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * q + d)
}

/// `dst = (I ⊗ M ⊗ I) src` where `M` acts on axis `mode` of a `modes`-axis
/// tensor. With `transpose`, `Mᵀ` is applied instead.
pub(crate) fn apply_square_mode(
    src: &[f64],
    dst: &mut [f64],
    q: usize,
    modes: usize,
    mode: usize,
    factor: &FactorMatrix,
    transpose: bool,
) {
    debug_assert_eq!(src.len(), dst.len());
    let inner = q.pow((modes - mode - 1) as u32);
    let outer = src.len() / (q * inner);
    match factor.structure() {
        FactorStructure::Square { all, diag } if inner == 1 => {
            for (d, s) in dst.chunks_exact_mut(q).zip(src.chunks_exact(q)) {
                let t: f64 = s.iter().sum();
                d.iter_mut().zip(s).for_each(|(d, v)| *d = all * t + diag * v);
            }
        }
        FactorStructure::Square { all, diag } => {
            let mut sums = vec![0.0; inner];
            for o in 0..outer {
                let base = o * q * inner;
                sums.iter_mut().for_each(|s| *s = 0.0);
                for m in 0..q {
                    let row = &src[base + m * inner..base + (m + 1) * inner];
                    for (s, v) in sums.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                for m in 0..q {
                    let lo = base + m * inner;
                    let out = &mut dst[lo..lo + inner];
                    let row = &src[lo..lo + inner];
                    for ((d, s), v) in out.iter_mut().zip(&sums).zip(row) {
                        *d = all * s + diag * v;
                    }
                }
            }
        }
        _ => {
            for o in 0..outer {
                let base = o * q * inner;
                for i in 0..q {
                    let out = &mut dst[base + i * inner..base + (i + 1) * inner];
                    out.iter_mut().for_each(|d| *d = 0.0);
                    for m in 0..q {
                        let w = if transpose {
                            factor.entry(m, i)
                        } else {
                            factor.entry(i, m)
                        };
                        if w == 0.0 {
                            continue;
                        }
                        let row = &src[base + m * inner..base + (m + 1) * inner];
                        for (d, v) in out.iter_mut().zip(row) {
                            *d += w * v;
                        }
                    }
                }
            }
        }
    }
}

/// `(outer, inner)` extents around `axis` of an `axes`-axis tensor.
fn split(q: usize, axes: usize, axis: usize) -> (usize, usize) {
    (q.pow(axis as u32), q.pow((axes - axis - 1) as u32))
}

/// Sum over `axis`; the result keeps the other axes in order.
pub(crate) fn sum_axis(src: &[f64], q: usize, axes: usize, axis: usize) -> Vec<f64> {
    let (outer, inner) = split(q, axes, axis);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        let block = &src[o * q * inner..(o + 1) * q * inner];
        if inner == 1 {
            dst[0] = block.iter().sum();
            continue;
        }
        for row in block.chunks_exact(inner) {
            dst.iter_mut().zip(row).for_each(|(d, v)| *d += v);
        }
    }
    out
}

/// `dst[c, rest] += scale · src[…, c at axis, …]`.
pub(crate) fn axis_to_front_add(src: &[f64], q: usize, axes: usize, axis: usize, scale: f64, dst: &mut [f64]) {
    let (outer, inner) = split(q, axes, axis);
    let plane = outer * inner;
    for o in 0..outer {
        for c in 0..q {
            let s = &src[(o * q + c) * inner..(o * q + c + 1) * inner];
            let d = &mut dst[c * plane + o * inner..c * plane + (o + 1) * inner];
            d.iter_mut().zip(s).for_each(|(d, v)| *d += scale * v);
        }
    }
}

/// Inverse layout move of [`axis_to_front_add`].
pub(crate) fn front_to_axis_add(src: &[f64], q: usize, axes: usize, axis: usize, scale: f64, dst: &mut [f64]) {
    let (outer, inner) = split(q, axes, axis);
    let plane = outer * inner;
    for o in 0..outer {
        for c in 0..q {
            let s = &src[c * plane + o * inner..c * plane + (o + 1) * inner];
            let d = &mut dst[(o * q + c) * inner..(o * q + c + 1) * inner];
            d.iter_mut().zip(s).for_each(|(d, v)| *d += scale * v);
        }
    }
}

/// `dst[…, k at axis, …] += src[…]` for every `k`; `src` lacks `axis`.
pub(crate) fn broadcast_add(src: &[f64], q: usize, axes: usize, axis: usize, dst: &mut [f64]) {
    let (outer, inner) = split(q, axes, axis);
    for o in 0..outer {
        let s = &src[o * inner..(o + 1) * inner];
        for row in dst[o * q * inner..(o + 1) * q * inner].chunks_exact_mut(inner) {
            row.iter_mut().zip(s).for_each(|(d, v)| *d += v);
        }
    }
}

/// Visits the entries of an `n`-axis tensor whose axes `a < b` agree, as
/// `(tensor index, shared symbol c, rest index r)`, with `r` running over the
/// other axes in order.
pub(crate) fn for_each_diagonal(n: usize, q: usize, a: usize, b: usize, mut f: impl FnMut(usize, usize, usize)) {
    let pre = q.pow(a as u32);
    let mid = q.pow((b - a - 1) as u32);
    let post = q.pow((n - b - 1) as u32);
    let (sa, sb) = (q.pow((n - a - 1) as u32), post);
    for o in 0..pre {
        for c in 0..q {
            for m in 0..mid {
                let base = o * q * sa + c * sa + m * q * post + c * sb;
                let r = (o * mid + m) * post;
                for i in 0..post {
                    f(base + i, c, r + i);
                }
            }
        }
    }
}

/// Visits every column tuple `y ∈ [q]ⁿ` in index order and reports
/// `(index, y_a, y_b, r)`, where `r` is the row-major index of the remaining
/// coordinates taken in increasing order.
pub(crate) fn walk_pair<F>(n: usize, q: usize, a: usize, b: usize, mut f: F)
where
    F: FnMut(usize, usize, usize, usize),
{
    debug_assert!(a < b && b < n);
    // per-coordinate increments of (y_a, y_b, r)
    let mut inc = vec![(0usize, 0usize, 0usize); n];
    let mut stride = 1;
    for c in (0..n).rev() {
        if c == a {
            inc[c].0 = 1;
        } else if c == b {
            inc[c].1 = 1;
        } else {
            inc[c].2 = stride;
            stride *= q;
        }
    }
    let (la, lb, lr) = inc[n - 1];
    let mut digits = vec![0usize; n - 1];
    let (mut ya, mut yb, mut r) = (0usize, 0usize, 0usize);
    let total = q.pow(n as u32);
    let mut idx = 0;
    while idx < total {
        for d in 0..q {
            f(idx + d, ya + d * la, yb + d * lb, r + d * lr);
        }
        idx += q;
        // advance the prefix odometer over coordinates 0..n-1
        let mut j = n - 1;
        while j > 0 {
            j -= 1;
            let (ia, ib, ir) = inc[j];
            digits[j] += 1;
            ya += ia;
            yb += ib;
            r += ir;
            if digits[j] < q {
                break;
            }
            digits[j] = 0;
            ya -= q * ia;
            yb -= q * ib;
            r -= q * ir;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{build_e1, build_factor, FactorKind, FactorRole};

    #[test]
    fn decode_encode_roundtrip() {
        let mut d = [0; 4];
        for i in 0..81 {
            decode(i, 3, &mut d);
            assert_eq!(encode(&d, 3), i);
        }
    }

    #[test]
    fn walk_pair_matches_decode() {
        for (n, q) in [(2, 3), (3, 2), (4, 3), (5, 2)] {
            for a in 0..n {
                for b in a + 1..n {
                    let mut seen = 0;
                    let mut digits = vec![0; n];
                    walk_pair(n, q, a, b, |idx, ya, yb, r| {
                        decode(idx, q, &mut digits);
                        assert_eq!(ya, digits[a]);
                        assert_eq!(yb, digits[b]);
                        let rest: Vec<usize> = (0..n)
                            .filter(|&c| c != a && c != b)
                            .map(|c| digits[c])
                            .collect();
                        assert_eq!(r, encode(&rest, q));
                        assert_eq!(idx, seen);
                        seen += 1;
                    });
                    assert_eq!(seen, q.pow(n as u32));
                }
            }
        }
    }

    #[test]
    fn structured_and_dense_mode_products_agree() {
        // A hand-made dense factor exercises the fallback path.
        let q = 3;
        let e1 = build_e1(q).unwrap();
        let x: Vec<f64> = (0..27).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut fast = vec![0.0; 27];
        let mut slow = vec![0.0; 27];
        for mode in 0..3 {
            apply_square_mode(&x, &mut fast, q, 3, mode, &e1, false);
            let mut digits = [0; 3];
            let mut other = [0; 3];
            for (i, s) in slow.iter_mut().enumerate() {
                decode(i, q, &mut digits);
                *s = 0.0;
                for m in 0..q {
                    other.copy_from_slice(&digits);
                    other[mode] = m;
                    *s += e1.entry(digits[mode], m) * x[encode(&other, q)];
                }
            }
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let e0 = build_factor(FactorRole::plain(FactorKind::E0), q).unwrap();
        apply_square_mode(&x, &mut fast, q, 3, 1, &e0, true);
        assert!(fast.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn axis_helpers_match_index_arithmetic() {
        let q = 3usize;
        for axes in 2..=4 {
            let len = q.pow(axes as u32);
            let x: Vec<f64> = (0..len).map(|i| (i as f64 * 0.61).cos()).collect();
            let mut digits = vec![0; axes];
            let mut small = vec![0; axes - 1];
            for axis in 0..axes {
                let summed = sum_axis(&x, q, axes, axis);
                let mut front = vec![0.0; len];
                axis_to_front_add(&x, q, axes, axis, 2.0, &mut front);
                let mut back = vec![0.0; len];
                front_to_axis_add(&front, q, axes, axis, 0.5, &mut back);
                let mut spread = vec![0.0; len];
                broadcast_add(&summed, q, axes, axis, &mut spread);
                let mut want_sum = vec![0.0; len / q];
                for (i, v) in x.iter().enumerate() {
                    decode(i, q, &mut digits);
                    let rest: Vec<usize> = (0..axes).filter(|&t| t != axis).map(|t| digits[t]).collect();
                    want_sum[encode(&rest, q)] += v;
                    let mut moved = vec![digits[axis]];
                    moved.extend(&rest);
                    assert!((front[encode(&moved, q)] - 2.0 * v).abs() < 1e-14);
                }
                for (i, v) in spread.iter().enumerate() {
                    decode(i, q, &mut digits);
                    small.iter_mut().zip((0..axes).filter(|&t| t != axis)).for_each(|(s, t)| *s = digits[t]);
                    assert!((v - want_sum[encode(&small, q)]).abs() < 1e-13);
                }
                assert!(summed.iter().zip(&want_sum).all(|(a, b)| (a - b).abs() < 1e-13));
                assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn diagonal_walk_matches_pair_walk() {
        for (n, q) in [(2, 3), (3, 2), (4, 3), (5, 2)] {
            for a in 0..n {
                for b in a + 1..n {
                    let mut want = Vec::new();
                    walk_pair(n, q, a, b, |idx, ya, yb, r| {
                        if ya == yb {
                            want.push((idx, ya, r));
                        }
                    });
                    let mut got = Vec::new();
                    for_each_diagonal(n, q, a, b, |idx, c, r| got.push((idx, c, r)));
                    got.sort_unstable();
                    assert_eq!(got, want);
                }
            }
        }
    }
}
