//! Independent reference formulas shared by the integration tests.
#![allow(dead_code)]

use ed_adversary::builder::AlphaProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Entry of `E_k^{(m)}` between tuples at Hamming distance `w`, via the
/// Krawtchouk polynomial `K_k(w) = Σ_j (−1)^j (q−1)^{k−j} C(w,j) C(m−w,k−j)`.
pub fn weight_projector_entry(m: usize, k: usize, w: usize, q: usize) -> f64 {
    let qf = q as f64;
    let kraw: f64 = (0..=k)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (qf - 1.0).powi((k - j) as i32) * binom(w, j) * binom(m - w, k - j)
        })
        .sum();
    kraw / qf.powi(m as i32)
}

/// `F[c, (y1, y2)] = q^{−1/2}([c = y1] + [c = y2]) − q^{−3/2}`.
pub fn f_entry(q: usize, c: usize, y1: usize, y2: usize) -> f64 {
    let qf = q as f64;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    (d(c, y1) + d(c, y2)) / qf.sqrt() - qf.powf(-1.5)
}

pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            out.push((a, b));
        }
    }
    out
}

pub fn tuples(len: usize, q: usize) -> Vec<Vec<usize>> {
    let total = q.pow(len as u32);
    (0..total)
        .map(|mut i| {
            let mut t = vec![0; len];
            for d in t.iter_mut().rev() {
                *d = i % q;
                i /= q;
            }
            t
        })
        .collect()
}

pub fn distinct(t: &[usize]) -> bool {
    (0..t.len()).all(|i| (i + 1..t.len()).all(|j| t[i] != t[j]))
}

/// Row inputs of block `{a,b}` in layout order: `(c, rest…)` row-major.
pub fn block_rows(n: usize, q: usize, a: usize, b: usize, legal_only: bool) -> Vec<Vec<usize>> {
    let rest: Vec<usize> = (0..n).filter(|&i| i != a && i != b).collect();
    tuples(n - 1, q)
        .into_iter()
        .filter(|t| !legal_only || distinct(t))
        .map(|t| {
            let mut x = vec![0; n];
            x[a] = t[0];
            x[b] = t[0];
            for (slot, &c) in rest.iter().enumerate() {
                x[c] = t[1 + slot];
            }
            x
        })
        .collect()
}

/// Entry of `G_{a,b}` straight from the defining formulas.
pub fn gamma_prime_entry(q: usize, alpha: &AlphaProfile, a: usize, b: usize, x: &[usize], y: &[usize]) -> f64 {
    let n = x.len();
    assert_eq!(x[a], x[b]);
    let f = f_entry(q, x[a], y[a], y[b]);
    let w = (0..n)
        .filter(|&i| i != a && i != b && x[i] != y[i])
        .count();
    alpha
        .alphas()
        .iter()
        .enumerate()
        .map(|(k, al)| al * f * weight_projector_entry(n - 2, k, w, q))
        .sum()
}

/// Dense `Γ′` (or `Γ` with `legal_only`) in the library's row and column order.
pub fn reference_gamma(n: usize, q: usize, alpha: &AlphaProfile, legal_only: bool) -> (Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let cols: Vec<Vec<usize>> = tuples(n, q)
        .into_iter()
        .filter(|t| !legal_only || distinct(t))
        .collect();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (a, b) in pairs(n) {
        for x in block_rows(n, q, a, b, legal_only) {
            entries.push(cols.iter().map(|y| gamma_prime_entry(q, alpha, a, b, &x, y)).collect());
            rows.push(x);
        }
    }
    (rows, cols, entries)
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<f64>() - 0.5).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
