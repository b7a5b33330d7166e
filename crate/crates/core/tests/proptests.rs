mod common;

use common::*;
use ed_adversary::analysis::{allones_rayleigh, w2_diagnostic};
use ed_adversary::builder::{
    default_alpha_profile, grid_alpha_profile, hadamard_mask, restrict_to_legal, stack_gamma_prime, surrogate,
    AlphaProfile, LegalSet, Limits,
};
use ed_adversary::lemma::LemmaTable;
use ed_adversary::spectral::{matvec, rmatvec, top_singular_value};
use ed_adversary::{InstanceParams, LanczosOptions};
use num_traits::Signed;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..=4, 2usize..=5).prop_flat_map(|(n, q)| {
        (Just(n), Just(q), prop::collection::vec(0.0f64..1.0, n - 1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entries_follow_the_formula((n, q, alphas) in instance(), picks in prop::collection::vec((0usize..1 << 20, 0usize..1 << 20), 8)) {
        let alpha = AlphaProfile::new(alphas, 1.0, "p").unwrap();
        let op = stack_gamma_prime(&InstanceParams::new(n, q).unwrap(), &alpha, &Limits::default()).unwrap();
        for (r, c) in picks {
            let (r, c) = (r % op.nrows(), c % op.ncols());
            let (bi, x) = op.row_input(r);
            let pair = op.blocks()[bi].pair;
            let y = op.col_input(c);
            let want = gamma_prime_entry(q, &alpha, pair.a(), pair.b(), &x, &y);
            prop_assert!((op.entry(r, c) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_for_every_kind((n, q, alphas) in instance(), seed in any::<u64>(), mask in 0usize..4) {
        let alpha = AlphaProfile::new(alphas, 1.0, "p").unwrap();
        let limits = Limits::default();
        let gp = stack_gamma_prime(&InstanceParams::new(n, q).unwrap(), &alpha, &limits).unwrap();
        let mut ops = vec![surrogate(&gp).unwrap(), hadamard_mask(&gp, mask % n).unwrap()];
        if q >= n {
            ops.push(restrict_to_legal(&hadamard_mask(&gp, mask % n).unwrap(), &limits).unwrap());
        }
        ops.push(gp);
        for op in ops {
            let v = random_vec(op.ncols(), seed);
            let w = random_vec(op.nrows(), seed ^ 0xabc);
            let lhs = dot(&w, &matvec(&op, &v).unwrap());
            let rhs = dot(&rmatvec(&op, &w).unwrap(), &v);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn mask_keeps_exactly_the_differing_entries((n, q, alphas) in instance(), i in 0usize..4, picks in prop::collection::vec((0usize..1 << 20, 0usize..1 << 20), 8)) {
        let i = i % n;
        let alpha = AlphaProfile::new(alphas, 1.0, "p").unwrap();
        let gp = stack_gamma_prime(&InstanceParams::new(n, q).unwrap(), &alpha, &Limits::default()).unwrap();
        let masked = hadamard_mask(&gp, i).unwrap();
        for (r, c) in picks {
            let (r, c) = (r % gp.nrows(), c % gp.ncols());
            let differ = gp.row_input(r).1[i] != gp.col_input(c)[i];
            let want = if differ { gp.entry(r, c) } else { 0.0 };
            prop_assert!((masked.entry(r, c) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_matches_off_the_first_mask((n, q, alphas) in instance(), picks in prop::collection::vec((0usize..1 << 20, 0usize..1 << 20), 8)) {
        let alpha = AlphaProfile::new(alphas, 1.0, "p").unwrap();
        let gp = stack_gamma_prime(&InstanceParams::new(n, q).unwrap(), &alpha, &Limits::default()).unwrap();
        let sur = surrogate(&gp).unwrap();
        for (r, c) in picks {
            let (r, c) = (r % gp.nrows(), c % gp.ncols());
            if gp.row_input(r).1[0] != gp.col_input(c)[0] {
                prop_assert!((sur.entry(r, c) - gp.entry(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rayleigh_is_below_the_top_singular_value((n, q, alphas) in instance()) {
        prop_assume!(alphas.iter().any(|a| *a > 1e-3));
        let alpha = AlphaProfile::new(alphas, 1.0, "p").unwrap();
        let op = stack_gamma_prime(&InstanceParams::new(n, q).unwrap(), &alpha, &Limits::default()).unwrap();
        let sigma = top_singular_value(&op, &LanczosOptions::default()).unwrap();
        prop_assert!(sigma.converged);
        prop_assert!(allones_rayleigh(&op).unwrap() <= sigma.sigma_max * (1.0 + 1e-9));
    }

    #[test]
    fn legal_sets_enumerate_injective_tuples_in_order(len in 0usize..5, q in 1usize..7, limit in prop::sample::select(vec![0usize, 1 << 20])) {
        let set = LegalSet::new(len, q, limit);
        let mut seen = Vec::new();
        set.for_each(|i, full| {
            assert_eq!(i, seen.len());
            seen.push(full);
        });
        let want: Vec<usize> = tuples(len, q)
            .iter()
            .enumerate()
            .filter(|(_, t)| distinct(t))
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(set.count(), want.len());
        prop_assert_eq!(seen, want);
    }

    #[test]
    fn built_in_profiles_meet_the_constraints(n in 2usize..80, r in 1usize..80) {
        let d = default_alpha_profile(n).unwrap();
        prop_assert!(d.satisfies_constraints(n, 1e-12));
        prop_assert_eq!(d.alphas().len(), n - 1);
        prop_assert!(w2_diagnostic(&d, n) <= (n as f64 * d.alphas()[n - 2]).powi(2).max(1.0) + 1e-9);
        if r <= n {
            let g = grid_alpha_profile(n, r).unwrap();
            prop_assert!(g.satisfies_constraints(n, 1e-12));
        }
    }

    #[test]
    fn lemma_values_are_non_negative(q in 0usize..40, l_frac in 0.0f64..=1.0, k_frac in 0.0f64..=1.0) {
        let l = (l_frac * q as f64).floor() as usize;
        let k = (k_frac * l as f64).floor() as usize;
        let g = LemmaTable::new().g(k, l, q).unwrap();
        prop_assert!(!g.is_negative());
    }
}
