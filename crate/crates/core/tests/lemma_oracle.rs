use ed_adversary::lemma::{brute_g, brute_tilde_sum, g_recurrence, lemma_table, LemmaTable, EXHAUSTIVE_LIMIT};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

fn kron(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ra in a {
        for rb in b {
            out.push(ra.iter().flat_map(|x| rb.iter().map(move |y| x * y)).collect());
        }
    }
    out
}

fn digits(mut i: usize, base: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = i % base;
        i /= base;
    }
    d
}

fn injective(t: &[usize]) -> bool {
    (0..t.len()).all(|i| !t[i + 1..].contains(&t[i]))
}

/// First legal row of `(qI_ℓ − J_ℓ)^{⊗k}` summed over legal columns.
fn explicit_g(k: usize, l: usize, q: usize) -> i64 {
    let base: Vec<Vec<i64>> = (0..l)
        .map(|i| (0..l).map(|j| if i == j { q as i64 - 1 } else { -1 }).collect())
        .collect();
    let mut m = vec![vec![1i64]];
    for _ in 0..k {
        m = kron(&m, &base);
    }
    let first = (0..m.len()).find(|&i| injective(&digits(i, l, k))).unwrap();
    m[first]
        .iter()
        .enumerate()
        .filter(|(j, _)| injective(&digits(*j, l, k)))
        .map(|(_, v)| *v)
        .sum()
}

#[test]
fn recurrence_matches_explicit_kronecker_power() {
    for q in 1usize..=7 {
        for l in 0..=q {
            for k in 0..=l {
                if l.pow(k as u32) > 729 {
                    continue;
                }
                let want = BigInt::from(explicit_g(k, l, q));
                assert_eq!(g_recurrence(k, l, q).unwrap(), want, "k={k} l={l} q={q}");
                assert_eq!(brute_g(k, l, q).unwrap(), want, "brute k={k} l={l} q={q}");
            }
        }
    }
}

#[test]
fn tilde_sum_is_scaled_g_for_small_sizes() {
    for q in 1..=7usize {
        for k in 0..=4.min(q) {
            let want = BigRational::new(g_recurrence(k, q, q).unwrap(), BigInt::from(q).pow(k as u32));
            assert_eq!(brute_tilde_sum(k, q).unwrap(), want, "k={k} q={q}");
            assert!(!want.is_negative());
        }
    }
}

#[test]
fn tilde_sum_spot_values() {
    // k = 1: no deletions, the row of qE₁ sums to zero
    for q in 1..=9 {
        assert!(brute_tilde_sum(1, q).unwrap().is_zero());
    }
    assert_eq!(
        brute_tilde_sum(2, 5).unwrap(),
        BigRational::new(BigInt::from(1), BigInt::from(5))
    );
    assert_eq!(g_recurrence(2, 5, 5).unwrap(), BigInt::from(5));
}

#[test]
fn non_negative_up_to_twelve() {
    let mut table = LemmaTable::new();
    for q in 0..=12 {
        for l in 0..=q {
            for k in 0..=l {
                let g = table.g(k, l, q).unwrap();
                assert!(!g.is_negative(), "g({k},{l},{q}) = {g}");
                if k == 0 {
                    assert_eq!(g, BigInt::from(1));
                }
                if k == 1 {
                    assert_eq!(g, BigInt::from(q as i64 - l as i64));
                }
            }
        }
    }
    assert!(!table.is_empty());
}

#[test]
fn summary_table_agrees_everywhere() {
    let summary = lemma_table(4, 7, EXHAUSTIVE_LIMIT).unwrap();
    assert!(summary.passed());
    assert!(summary.rows.iter().all(|r| r.k <= r.l && r.l <= r.q));
    let brute_rows = summary.rows.iter().filter(|r| r.agrees.is_some()).count();
    assert!(brute_rows > 0);
    assert!(summary.rows.iter().all(|r| r.agrees != Some(false)));
}

#[test]
fn out_of_range_arguments_are_rejected() {
    assert!(g_recurrence(3, 2, 5).is_err());
    assert!(g_recurrence(2, 6, 5).is_err());
    assert!(brute_tilde_sum(5, 4).is_err());
    assert!(brute_g(9, 12, 12).is_err());
}
