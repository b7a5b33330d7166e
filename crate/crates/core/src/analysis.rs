//! Closed forms for the Gram operators of the construction, their numeric
//! verification, and the adversary ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::builder::{
    assemble_weight_part, hadamard_mask, restrict_to_legal, stack_blocks, stack_gamma_prime, surrogate,
    AlphaProfile, BlockOperator, Limits, OperatorKind,
};
use crate::error::{invalid, Error, Result};
use crate::plan::MatvecPlan;
use crate::scheme::{
    expand_weight_projector, expand_weight_projector_on, FactorKind, FactorRole, InstanceParams, KroneckerSum,
    KroneckerTerm, Slot,
};
use crate::spectral::{
    dense_top_singular_value, materialize_dense, top_singular_value, DenseMatrix, LanczosOptions, LinearOperator,
    SpectralResult,
};
use crate::tensor;

fn check_weight(n: usize, k: usize) -> Result<()> {
    if n < 2 || k + 2 > n {
        return Err(invalid(format!("need 0 ≤ k ≤ n−2, got n={n}, k={k}")));
    }
    Ok(())
}

/// Eigenvalue of the Gram of the `F₀ ⊗ E_k` stack on weight `k`: `C(n−k, 2)`.
pub fn w_f0_coefficient(n: usize, k: usize) -> Result<f64> {
    check_weight(n, k)?;
    Ok(((n - k) * (n - k - 1)) as f64 / 2.0)
}

/// Largest Gram eigenvalue of the `F₁ ⊗ E_k` stack: `2(k+1)(n−k−1)`.
pub fn w_f1_norm(n: usize, k: usize) -> Result<f64> {
    check_weight(n, k)?;
    Ok((2 * (k + 1) * (n - k - 1)) as f64)
}

/// Weight of `E₀ ⊗ E_{k+1}` in the Gram of the surrogate's `{1,b}` blocks.
pub fn w1_coefficient(k: usize) -> f64 {
    (k + 1) as f64
}

/// `n² · max_k (α_k − α_{k+1})²`, with `α_{n−1} = 0` past the end.
pub fn w2_diagnostic(alpha: &AlphaProfile, n: usize) -> f64 {
    let a = alpha.alphas();
    let max_step = (0..a.len())
        .map(|k| a[k] - a.get(k + 1).copied().unwrap_or(0.0))
        .fold(0.0f64, |m, d| m.max(d * d));
    (n * n) as f64 * max_step
}

/// `α₀·sqrt(n(n−1)/2)`, the singular value of `Γ′` on the all-ones column.
pub fn weight0_lower_bound(n: usize, alpha: &AlphaProfile) -> f64 {
    alpha.alpha0() * ((n * (n - 1)) as f64 / 2.0).sqrt()
}

/// `uᵀ A v` for normalized all-ones `u` and `v`.
pub fn allones_rayleigh<A: LinearOperator + ?Sized>(op: &A) -> Result<f64> {
    let (rows, cols) = (op.nrows(), op.ncols());
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyIndexSet(format!("operator is {rows}×{cols}")));
    }
    let mut out = vec![0.0; rows];
    op.apply(&vec![1.0; cols], &mut out);
    let total: f64 = out.iter().sum();
    Ok(total / ((rows as f64) * (cols as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckMethod {
    /// Full dense Gram and eigendecomposition.
    Dense,
    /// Exact Gram columns at one representative of every orbit of the
    /// symbol and coordinate symmetries, plus random columns; top eigenvalue
    /// by Lanczos.
    ColumnProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramCheck {
    pub name: String,
    pub n: usize,
    pub q: usize,
    pub k: Option<usize>,
    pub predicted: f64,
    pub measured: f64,
    /// Largest deviation over every compared quantity.
    pub deviation: f64,
    pub tolerance: f64,
    pub method: CheckMethod,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramFormulaReport {
    pub checks: Vec<GramCheck>,
    pub max_deviation: f64,
    pub passed: bool,
}

impl GramFormulaReport {
    pub fn new(checks: Vec<GramCheck>) -> Self {
        Self {
            max_deviation: checks.iter().fold(0.0, |m, c| m.max(c.deviation)),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramOptions {
    /// Largest `qⁿ` handled by a dense Gram.
    pub dense_dim: usize,
    pub random_probes: usize,
    pub tolerance: f64,
    pub lanczos: LanczosOptions,
    pub limits: Limits,
}

impl Default for GramOptions {
    fn default() -> Self {
        Self {
            dense_dim: 1296,
            random_probes: 16,
            tolerance: 1e-8,
            lanczos: LanczosOptions {
                tol: 1e-11,
                ..LanczosOptions::default()
            },
            limits: Limits::default(),
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// One tuple per orbit of `[q]ⁿ` under symbol and coordinate permutations:
/// symbol `j` repeated `λ_j` times for each partition `λ` of `n` with at
/// most `q` parts.
pub fn orbit_representatives(n: usize, q: usize) -> Vec<Vec<usize>> {
    fn partitions(rest: usize, max: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        if parts == 0 {
            return;
        }
        for p in (1..=rest.min(max)).rev() {
            cur.push(p);
            partitions(rest - p, p, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut parts = Vec::new();
    partitions(n, n, q, &mut Vec::new(), &mut parts);
    parts
        .into_iter()
        .map(|lambda| {
            lambda
                .iter()
                .enumerate()
                .flat_map(|(sym, &m)| std::iter::repeat_n(sym, m))
                .collect()
        })
        .collect()
}

fn probe_columns(n: usize, q: usize, random: usize, seed: u64) -> Vec<usize> {
    let mut cols: Vec<usize> = orbit_representatives(n, q)
        .iter()
        .map(|y| tensor::encode(y, q))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = q.pow(n as u32);
    cols.extend((0..random).map(|_| rng.random_range(0..total)));
    cols
}

/// Column `y` of `AᵀA`.
fn gram_column(plan: &MatvecPlan<'_>, y: usize, rows: &mut [f64]) -> Vec<f64> {
    let mut e = vec![0.0; plan.ncols()];
    e[y] = 1.0;
    plan.apply(&e, rows);
    let mut out = vec![0.0; plan.ncols()];
    plan.apply_transpose(rows, &mut out);
    out
}

fn unit_apply<A: LinearOperator>(op: &A, y: usize) -> Vec<f64> {
    let mut e = vec![0.0; op.ncols()];
    e[y] = 1.0;
    let mut out = vec![0.0; op.nrows()];
    op.apply(&e, &mut out);
    out
}

fn weight_part_stack(params: &InstanceParams, kind: FactorKind, k: usize, limits: &Limits) -> Result<BlockOperator> {
    stack_blocks(params, assemble_weight_part(params, kind, k)?, limits)
}

/// The Gram of the `F₀ ⊗ E_k` stack equals `C(n−k,2)·E_k^{(n)}`.
pub fn check_f0_gram(params: &InstanceParams, k: usize, opts: &GramOptions) -> Result<GramCheck> {
    let (n, q) = (params.n(), params.q());
    let c = w_f0_coefficient(n, k)?;
    let op = weight_part_stack(params, FactorKind::F0, k, &opts.limits)?;
    let projector = KroneckerSum::weighted_projectors(n, q, &[(k, c)])?;
    let dim = op.ncols();
    let (measured, deviation, method) = if dim <= opts.dense_dim {
        let a = materialize_dense(&op, opts.limits.dense_entries)?;
        let gram = a.gram();
        let entry_dev = gram.max_abs_diff(&projector.to_dense());
        let ev = gram.symmetric_eigenvalues()?;
        let rank = binomial(n, k) * (q - 1).pow(k as u32);
        let spec_dev = ev
            .iter()
            .enumerate()
            .map(|(i, &l)| (l - if i < rank { c } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        (ev[0], entry_dev.max(spec_dev), CheckMethod::Dense)
    } else {
        let plan = MatvecPlan::new(&op);
        let mut rows = vec![0.0; op.nrows()];
        let mut dev: f64 = 0.0;
        for y in probe_columns(n, q, opts.random_probes, opts.lanczos.seed) {
            let g = gram_column(&plan, y, &mut rows);
            dev = dev.max(max_abs_diff(&g, &unit_apply(&projector, y)));
        }
        // Rayleigh quotient on the weight-k part of the first probe column
        let v = unit_apply(&projector, 0);
        let mut gv = vec![0.0; dim];
        plan.apply(&v, &mut rows);
        plan.apply_transpose(&rows, &mut gv);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let measured = v.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>() / vv;
        (measured, dev.max((measured - c).abs()), CheckMethod::ColumnProbe)
    };
    Ok(GramCheck {
        name: "f0_weight_gram".into(),
        n,
        q,
        k: Some(k),
        predicted: c,
        measured,
        deviation,
        tolerance: opts.tolerance,
        method,
        passed: deviation <= opts.tolerance,
    })
}

/// The Gram of the `F₁ ⊗ E_k` stack has top eigenvalue `2(k+1)(n−k−1)` and
/// vanishes outside weight `k+1`.
pub fn check_f1_gram(params: &InstanceParams, k: usize, opts: &GramOptions) -> Result<GramCheck> {
    let (n, q) = (params.n(), params.q());
    let predicted = w_f1_norm(n, k)?;
    let op = weight_part_stack(params, FactorKind::F1, k, &opts.limits)?;
    let projector = KroneckerSum::weighted_projectors(n, q, &[(k + 1, 1.0)])?;
    let dim = op.ncols();
    let (measured, support_dev, method) = if dim <= opts.dense_dim {
        let a = materialize_dense(&op, opts.limits.dense_entries)?;
        let gram = a.gram();
        let projected = projector.to_dense().matmul(&gram);
        let ev = gram.symmetric_eigenvalues()?;
        (ev[0], gram.max_abs_diff(&projected), CheckMethod::Dense)
    } else {
        let plan = MatvecPlan::new(&op);
        let mut rows = vec![0.0; op.nrows()];
        let mut dev: f64 = 0.0;
        let mut projected = vec![0.0; dim];
        for y in probe_columns(n, q, opts.random_probes, opts.lanczos.seed) {
            let g = gram_column(&plan, y, &mut rows);
            projector.apply(&g, &mut projected);
            dev = dev.max(max_abs_diff(&g, &projected));
        }
        let top = top_singular_value(&plan, &opts.lanczos)?;
        if !top.converged {
            return Err(Error::Backend(format!("Lanczos did not converge: {top:?}")));
        }
        (top.sigma_max * top.sigma_max, dev, CheckMethod::ColumnProbe)
    };
    let deviation = support_dev.max((measured - predicted).abs());
    Ok(GramCheck {
        name: "f1_weight_gram".into(),
        n,
        q,
        k: Some(k),
        predicted,
        measured,
        deviation,
        tolerance: opts.tolerance,
        method,
        passed: deviation <= opts.tolerance,
    })
}

/// `Σ_k α_k²(k+1)·E₀ ⊗ E_{k+1}^{(n−1)}` on `[q]ⁿ`.
pub fn predicted_surrogate_first_gram(params: &InstanceParams, alpha: &AlphaProfile) -> Result<KroneckerSum> {
    let n = params.n();
    let rest: Vec<usize> = (1..n).collect();
    let mut terms = Vec::new();
    for (k, &a) in alpha.alphas().iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for t in expand_weight_projector_on(&rest, k + 1)? {
            let mut slots = vec![Slot::single(0, FactorRole::plain(FactorKind::E0))];
            slots.extend(t.slots);
            terms.push(KroneckerTerm::new(a * a * w1_coefficient(k), slots));
        }
    }
    KroneckerSum::new(n, params.q(), terms)
}

/// Dense Gram of the surrogate's `{1,b}` blocks against its closed form.
pub fn check_surrogate_first_gram(params: &InstanceParams, alpha: &AlphaProfile, opts: &GramOptions) -> Result<GramCheck> {
    let gp = stack_gamma_prime(params, alpha, &opts.limits)?;
    let first = surrogate(&gp)?.select_blocks(|p| p.contains(0));
    let gram = materialize_dense(&first, opts.limits.dense_entries)?.gram();
    let predicted = predicted_surrogate_first_gram(params, alpha)?.to_dense();
    let deviation = gram.max_abs_diff(&predicted);
    let top_pred = alpha
        .alphas()
        .iter()
        .enumerate()
        .map(|(k, a)| a * a * w1_coefficient(k))
        .fold(0.0, f64::max);
    Ok(GramCheck {
        name: "surrogate_first_gram".into(),
        n: params.n(),
        q: params.q(),
        k: None,
        predicted: top_pred,
        measured: gram.symmetric_eigenvalues()?[0],
        deviation,
        tolerance: opts.tolerance,
        method: CheckMethod::Dense,
        passed: deviation <= opts.tolerance,
    })
}

/// `max |Γ′∘Δ₁ − Γ′₁∘Δ₁|` over all entries.
pub fn check_surrogate_identity(params: &InstanceParams, alpha: &AlphaProfile, limits: &Limits) -> Result<f64> {
    let gp = stack_gamma_prime(params, alpha, limits)?;
    let lhs = materialize_dense(&hadamard_mask(&gp, 0)?, limits.dense_entries)?;
    let rhs = materialize_dense(&hadamard_mask(&surrogate(&gp)?, 0)?, limits.dense_entries)?;
    Ok(lhs.max_abs_diff(&rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub dense: f64,
    pub krylov: SpectralResult,
    pub relative_error: f64,
}

/// Every operator kind of one instance that has a nonempty index space.
pub fn operator_family(params: &InstanceParams, alpha: &AlphaProfile, limits: &Limits) -> Result<Vec<BlockOperator>> {
    let gp = stack_gamma_prime(params, alpha, limits)?;
    let mut ops = vec![
        surrogate(&gp)?,
        hadamard_mask(&gp, 0)?,
        restrict_to_legal(&gp, limits)?,
        restrict_to_legal(&hadamard_mask(&gp, 0)?, limits)?,
    ];
    ops.insert(0, gp);
    ops.retain(|op| op.nrows() > 0 && op.ncols() > 0);
    Ok(ops)
}

/// Matrix-free against dense top singular values for every kind.
pub fn oracle_equivalence(
    params: &InstanceParams,
    alpha: &AlphaProfile,
    limits: &Limits,
    lanczos: &LanczosOptions,
) -> Result<Vec<OracleCheck>> {
    operator_family(params, alpha, limits)?
        .iter()
        .map(|op| {
            let dense = dense_top_singular_value(&materialize_dense(op, limits.dense_entries)?)?;
            let krylov = top_singular_value(op, lanczos)?;
            let relative_error = if dense > 0.0 {
                (krylov.sigma_max - dense).abs() / dense
            } else {
                krylov.sigma_max
            };
            Ok(OracleCheck {
                kind: op.kind().to_string(),
                rows: op.nrows(),
                cols: op.ncols(),
                dense,
                krylov,
                relative_error,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioOptions {
    pub lanczos: LanczosOptions,
    pub limits: Limits,
    /// Also compute `‖Γ∘Δ₂‖`, which symmetry makes equal to `‖Γ∘Δ₁‖`.
    pub check_second_mask: bool,
    /// Relative slack for the inequalities of the sanity chain.
    pub slack: f64,
}

impl Default for RatioOptions {
    fn default() -> Self {
        Self {
            lanczos: LanczosOptions::default(),
            limits: Limits::default(),
            check_second_mask: false,
            slack: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SanityChain {
    /// `allones_rayleigh(Γ) ≤ ‖Γ‖`
    pub rayleigh_below_gamma: bool,
    /// `‖Γ‖ ≤ ‖Γ′‖`
    pub gamma_below_gamma_prime: bool,
    /// `‖Γ∘Δ₁‖ ≤ ‖Γ′∘Δ₁‖`
    pub masked_below_prime_masked: bool,
    /// `‖Γ′∘Δ₁‖ ≤ 2‖Γ′₁‖`
    pub prime_masked_below_twice_surrogate: bool,
    /// `‖Γ′‖ ≥ α₀·sqrt(n(n−1)/2)`
    pub gamma_prime_above_weight0: bool,
}

impl SanityChain {
    pub fn all(&self) -> bool {
        self.rayleigh_below_gamma
            && self.gamma_below_gamma_prime
            && self.masked_below_prime_masked
            && self.prime_masked_below_twice_surrogate
            && self.gamma_prime_above_weight0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub n: usize,
    pub q: usize,
    pub alpha_label: String,
    pub alpha0: f64,
    pub r: f64,
    pub norm_gamma_prime: f64,
    pub norm_gamma: f64,
    /// `‖Γ∘Δ₁‖`
    pub norm_gamma_masked: f64,
    /// `‖Γ′∘Δ₁‖`
    pub norm_gamma_prime_masked: f64,
    /// `‖Γ′₁‖`
    pub surrogate_norm: f64,
    pub norm_gamma_masked_second: Option<f64>,
    pub allones_rayleigh: f64,
    pub allones_rayleigh_prime: f64,
    pub weight0_lower_bound: f64,
    pub w2_diagnostic: f64,
    pub ratio: f64,
    pub ratio_over_n23: f64,
    pub sanity: SanityChain,
    /// `‖Γ′‖` exceeds the weight-0 value by more than 5%.
    pub weight0_dominance_violated: bool,
    pub spectral: Vec<(String, SpectralResult)>,
    pub converged: bool,
}

impl RatioReport {
    pub fn passed(&self) -> bool {
        self.sanity.all() && self.converged && self.ratio > 0.0
    }
}

/// `‖Γ‖ / ‖Γ∘Δ₁‖` with every companion norm and the sanity chain.
pub fn adversary_ratio(params: &InstanceParams, alpha: &AlphaProfile, opts: &RatioOptions) -> Result<RatioReport> {
    let (n, q) = (params.n(), params.q());
    if q < n {
        return Err(Error::EmptyIndexSet(format!(
            "q={q} < n={n}: no column has pairwise distinct symbols"
        )));
    }
    let limits = &opts.limits;
    let gp = stack_gamma_prime(params, alpha, limits)?;
    let gamma = restrict_to_legal(&gp, limits)?;
    let gp_masked = hadamard_mask(&gp, 0)?;
    let gamma_masked = restrict_to_legal(&gp_masked, limits)?;
    let sur = surrogate(&gp)?;

    let mut spectral = Vec::new();
    let mut norm = |label: &str, op: &BlockOperator| -> Result<f64> {
        let r = top_singular_value(op, &opts.lanczos)?;
        spectral.push((label.to_string(), r));
        Ok(r.sigma_max)
    };
    let norm_gamma_prime = norm("gamma_prime", &gp)?;
    let norm_gamma = norm("gamma", &gamma)?;
    let norm_gamma_masked = norm("gamma_masked", &gamma_masked)?;
    let norm_gamma_prime_masked = norm("gamma_prime_masked", &gp_masked)?;
    let surrogate_norm = norm("surrogate", &sur)?;
    let norm_gamma_masked_second = if opts.check_second_mask {
        Some(norm("gamma_masked_2", &hadamard_mask(&gamma, 1)?)?)
    } else {
        None
    };
    debug_assert_eq!(gamma_masked.kind(), OperatorKind::MaskedGamma(0));

    let allones_rayleigh = allones_rayleigh(&gamma)?;
    let allones_rayleigh_prime = crate::analysis::allones_rayleigh(&gp)?;
    let w0 = weight0_lower_bound(n, alpha);
    let s = opts.slack;
    let sanity = SanityChain {
        rayleigh_below_gamma: allones_rayleigh <= norm_gamma * (1.0 + s),
        gamma_below_gamma_prime: norm_gamma <= norm_gamma_prime * (1.0 + s),
        masked_below_prime_masked: norm_gamma_masked <= norm_gamma_prime_masked * (1.0 + s),
        prime_masked_below_twice_surrogate: norm_gamma_prime_masked <= 2.0 * surrogate_norm * (1.0 + s),
        gamma_prime_above_weight0: norm_gamma_prime >= w0 * (1.0 - s),
    };
    let ratio = norm_gamma / norm_gamma_masked;
    Ok(RatioReport {
        n,
        q,
        alpha_label: alpha.label().to_string(),
        alpha0: alpha.alpha0(),
        r: alpha.r(),
        norm_gamma_prime,
        norm_gamma,
        norm_gamma_masked,
        norm_gamma_prime_masked,
        surrogate_norm,
        norm_gamma_masked_second,
        allones_rayleigh,
        allones_rayleigh_prime,
        weight0_lower_bound: w0,
        w2_diagnostic: w2_diagnostic(alpha, n),
        ratio,
        ratio_over_n23: ratio / (n as f64).powf(2.0 / 3.0),
        sanity,
        weight0_dominance_violated: norm_gamma_prime > 1.05 * w0,
        converged: spectral.iter().all(|(_, r)| r.converged),
        spectral,
    })
}

/// The weight projector `E_k^{(n)}` as a dense matrix.
pub fn dense_weight_projector(n: usize, q: usize, k: usize) -> Result<DenseMatrix> {
    Ok(KroneckerSum::new(n, q, expand_weight_projector(n, k)?)?.to_dense())
}
