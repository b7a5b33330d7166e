//! Exact arithmetic for the non-negativity lemma.
//!
//! `g(k, ℓ, q)` is the sum of the first row of `(qI_ℓ − J_ℓ)^{⊗k}` after
//! deleting every row and column whose index tuple repeats a symbol. The
//! recurrence below computes it in exact integers; the brute-force
//! enumeration is an independent oracle for small sizes.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Default cap on `ℓ^k` for exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

fn check_range(k: usize, l: usize, q: usize) -> Result<()> {
    if k > l || l > q {
        return Err(invalid(format!("need 0 ≤ k ≤ ℓ ≤ q, got k={k}, ℓ={l}, q={q}")));
    }
    Ok(())
}

/// Memoized values of `g(k, ℓ, q)`.
#[derive(Debug, Default, Clone)]
pub struct LemmaTable {
    memo: HashMap<(usize, usize, usize), BigInt>,
}

impl LemmaTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// `g(k, ℓ, q)` by the recurrence
    /// `g(k,ℓ,q) = (q−ℓ+k−1)·g(k−1,ℓ−1,q) + (k−1)(ℓ−k+1)·g(k−2,ℓ−1,q)`.
    pub fn g(&mut self, k: usize, l: usize, q: usize) -> Result<BigInt> {
        check_range(k, l, q)?;
        Ok(self.g_unchecked(k, l, q))
    }

    fn g_unchecked(&mut self, k: usize, l: usize, q: usize) -> BigInt {
        match k {
            0 => return BigInt::one(),
            1 => return BigInt::from(q as i64 - l as i64),
            _ => {}
        }
        if let Some(v) = self.memo.get(&(k, l, q)) {
            return v.clone();
        }
        let a = BigInt::from((q - l + k - 1) as u64) * self.g_unchecked(k - 1, l - 1, q);
        let b = BigInt::from(((k - 1) * (l - k + 1)) as u64) * self.g_unchecked(k - 2, l - 1, q);
        let v = a + b;
        self.memo.insert((k, l, q), v.clone());
        v
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// One-shot `g(k, ℓ, q)`.
pub fn g_recurrence(k: usize, l: usize, q: usize) -> Result<BigInt> {
    LemmaTable::new().g(k, l, q)
}

/// `g(k, ℓ, q)` by enumerating all distinct-symbol column tuples of `[ℓ]^k`
/// against the first distinct-symbol row `(0, 1, …, k−1)`.
pub fn brute_g(k: usize, l: usize, q: usize) -> Result<BigInt> {
    check_range(k, l, q)?;
    let needed = (l as u128).pow(k as u32);
    if needed > EXHAUSTIVE_LIMIT {
        return Err(Error::ResourceGuard {
            what: "exhaustive tuples ℓ^k",
            needed,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let diag = q as i128 - 1;
    let mut total = BigInt::zero();
    let mut partial: i128 = 0;
    let mut y = vec![0usize; k];
    let mut used = vec![false; l];
    // depth-first over injective tuples; the entry is a product of per-slot terms
    fn walk(pos: usize, y: &mut [usize], used: &mut [bool], prod: i128, diag: i128, acc: &mut i128, total: &mut BigInt) {
        if pos == y.len() {
            match acc.checked_add(prod) {
                Some(v) => *acc = v,
                None => {
                    *total += BigInt::from(*acc);
                    *acc = prod;
                }
            }
            return;
        }
        for s in 0..used.len() {
            if used[s] {
                continue;
            }
            used[s] = true;
            y[pos] = s;
            let factor = if s == pos { diag } else { -1 };
            walk(pos + 1, y, used, prod * factor, diag, acc, total);
            used[s] = false;
        }
    }
    walk(0, &mut y, &mut used, 1, diag, &mut partial, &mut total);
    Ok(total + BigInt::from(partial))
}

/// Sum of the first row of `Ẽ₁^{(k)}`, the distinct-symbol restriction of
/// `E₁^{⊗k}` over `[q]`, as an exact rational.
pub fn brute_tilde_sum(k: usize, q: usize) -> Result<BigRational> {
    let s = brute_g(k, q, q)?;
    Ok(BigRational::new(s, BigInt::from(q).pow(k as u32)))
}

/// `q^{−k}·g(k, q, q)` from the recurrence.
pub fn tilde_sum_from_recurrence(k: usize, q: usize) -> Result<BigRational> {
    let g = g_recurrence(k, q, q)?;
    Ok(BigRational::new(g, BigInt::from(q).pow(k as u32)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub k: usize,
    pub l: usize,
    pub q: usize,
    /// Decimal string; values outgrow 64 bits quickly.
    pub g: String,
    pub non_negative: bool,
    /// Exhaustive value when it was within the enumeration limit.
    pub brute: Option<String>,
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub rows: Vec<LemmaRow>,
    pub all_non_negative: bool,
    pub all_agree: bool,
}

impl LemmaSummary {
    pub fn passed(&self) -> bool {
        self.all_non_negative && self.all_agree
    }
}

/// Every `g(k, ℓ, q)` with `1 ≤ q ≤ max_q`, `k ≤ ℓ ≤ q`, `k ≤ max_k`, with the
/// exhaustive oracle attached where `ℓ^k ≤ brute_limit`.
pub fn lemma_table(max_k: usize, max_q: usize, brute_limit: u128) -> Result<LemmaSummary> {
    let mut table = LemmaTable::new();
    let mut rows = Vec::new();
    for q in 1..=max_q {
        for l in 0..=q {
            for k in 0..=max_k.min(l) {
                let g = table.g(k, l, q)?;
                let brute = if (l as u128).pow(k as u32) <= brute_limit.min(EXHAUSTIVE_LIMIT) {
                    Some(brute_g(k, l, q)?)
                } else {
                    None
                };
                rows.push(LemmaRow {
                    k,
                    l,
                    q,
                    non_negative: !g.is_negative(),
                    agrees: brute.as_ref().map(|b| *b == g),
                    brute: brute.map(|b| b.to_string()),
                    g: g.to_string(),
                });
            }
        }
    }
    Ok(LemmaSummary {
        all_non_negative: rows.iter().all(|r| r.non_negative),
        all_agree: rows.iter().all(|r| r.agrees != Some(false)),
        rows,
    })
}
