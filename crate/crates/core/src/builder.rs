//! Assembly of the stacked adversary matrix `Γ′` and its variants: the Δ₁
//! surrogate `Γ′₁`, Hadamard-masked operators `Γ′∘Δ_i`, and the restriction
//! `Γ` to legal rows and columns.
//!
//! Block `G_{a,b}` has rows `(c, x_rest)`, where `c = x_a = x_b` is the
//! collision symbol and `x_rest` lists the other coordinates in increasing
//! order. Columns are `y ∈ [q]ⁿ` in row-major order. Blocks are stacked in
//! lexicographic pair order.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scheme::{
    expand_weight_projector_on, mask_factor, FactorKind, FactorRole, FactorTable, InstanceParams,
    KroneckerTerm, MaskSlot, Slot, SlotCoords,
};
use crate::tensor;

/// Coefficients `α_0..α_{n−2}` of `G_{1,2} = Σ_k α_k F ⊗ E_k^{(n−2)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaProfile {
    alphas: Vec<f64>,
    r: f64,
    label: String,
}

impl AlphaProfile {
    pub fn new(alphas: Vec<f64>, r: f64, label: impl Into<String>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(invalid("alpha profile is empty"));
        }
        if let Some(bad) = alphas.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(invalid(format!("alpha coefficients must be finite and non-negative, got {bad}")));
        }
        Ok(Self {
            alphas,
            r,
            label: label.into(),
        })
    }

    /// Parses one coefficient per line (blank lines ignored).
    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self> {
        let alphas = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| invalid(format!("bad alpha value {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let r = alphas.iter().filter(|&&a| a > 0.0).count() as f64;
        Self::new(alphas, r, label)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha0(&self) -> f64 {
        self.alphas[0]
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `α_k ≤ (k+1)^{−1/2}` and `α_k − α_{k+1} ≤ 1/n` for consecutive entries of
    /// the profile, each up to `slack`.
    pub fn satisfies_constraints(&self, n: usize, slack: f64) -> bool {
        let inv_n = 1.0 / n as f64;
        let magnitude = self
            .alphas
            .iter()
            .enumerate()
            .all(|(k, &a)| a <= 1.0 / ((k + 1) as f64).sqrt() + slack);
        let slope = self.alphas.windows(2).all(|w| w[0] - w[1] <= inv_n + slack);
        magnitude && slope
    }
}

/// `α_k = max(0, n^{−1/3} − k/n)` with cutoff `r = n^{2/3}`.
pub fn default_alpha_profile(n: usize) -> Result<AlphaProfile> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    let nf = n as f64;
    let top = nf.powf(-1.0 / 3.0);
    let alphas = (0..n - 1)
        .map(|k| (top - k as f64 / nf).max(0.0))
        .collect();
    AlphaProfile::new(alphas, nf.powf(2.0 / 3.0), "auto")
}

/// Linear ramp `α_k = c(r)·max(0, r − k)` scaled to the tightest constraint.
pub fn grid_alpha_profile(n: usize, r: usize) -> Result<AlphaProfile> {
    if n < 2 || r == 0 || r > n {
        return Err(invalid(format!("grid profile needs n ≥ 2 and 1 ≤ r ≤ n, got n={n}, r={r}")));
    }
    let nf = n as f64;
    let mut scale = 1.0 / nf;
    for k in 0..r.min(n - 1) {
        scale = scale.min(1.0 / ((r - k) as f64 * ((k + 1) as f64).sqrt()));
    }
    let alphas = (0..n - 1)
        .map(|k| scale * r.saturating_sub(k) as f64)
        .collect();
    AlphaProfile::new(alphas, r as f64, format!("grid(r={r})"))
}

/// The grid profile with the largest `α_0` (ties go to the smaller `r`).
pub fn best_grid_alpha_profile(n: usize) -> Result<AlphaProfile> {
    let mut best = grid_alpha_profile(n, 1)?;
    for r in 2..=n {
        let p = grid_alpha_profile(n, r)?;
        if p.alpha0() > best.alpha0() {
            best = p;
        }
    }
    Ok(best)
}

/// An unordered collision position `{a, b}`, stored with `a < b` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CollisionPair {
    a: usize,
    b: usize,
}

impl CollisionPair {
    pub fn new(a: usize, b: usize, n: usize) -> Result<Self> {
        if a == b || a >= n || b >= n {
            return Err(invalid(format!("invalid collision pair {{{a},{b}}} for n={n}")));
        }
        Ok(Self {
            a: a.min(b),
            b: a.max(b),
        })
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn contains(&self, coord: usize) -> bool {
        coord == self.a || coord == self.b
    }

    /// All pairs in lexicographic order.
    pub fn all(n: usize) -> Vec<CollisionPair> {
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| CollisionPair { a, b }))
            .collect()
    }

    /// Coordinates outside the pair, increasing.
    pub fn rest(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&c| !self.contains(c)).collect()
    }
}

impl fmt::Display for CollisionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.a + 1, self.b + 1)
    }
}

/// Resource ceilings shared by the builder and the spectral engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Limits {
    /// Maximum `rows × cols` for dense materialization.
    pub dense_entries: usize,
    /// Maximum length of a full column-space iteration vector (`qⁿ`).
    pub vector_len: usize,
    /// Legal index sets up to this size are stored; larger ones are
    /// enumerated on the fly.
    pub stored_legal: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            dense_entries: 40_000_000,
            vector_len: 1 << 28,
            stored_legal: 1 << 22,
        }
    }
}

/// Tuples in `[q]^len` with pairwise distinct symbols.
#[derive(Debug, Clone)]
pub struct LegalSet {
    len: usize,
    q: usize,
    count: usize,
    stored: Option<Vec<usize>>,
}

impl LegalSet {
    pub fn new(len: usize, q: usize, store_limit: usize) -> Self {
        let count = if len > q {
            0
        } else {
            (q - len + 1..=q).product()
        };
        let mut set = Self {
            len,
            q,
            count,
            stored: None,
        };
        if count <= store_limit {
            let mut v = Vec::with_capacity(count);
            set.for_each(|_, full| v.push(full));
            set.stored = Some(v);
        }
        set
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn full_len(&self) -> usize {
        self.q.pow(self.len as u32)
    }

    pub fn is_stored(&self) -> bool {
        self.stored.is_some()
    }

    pub fn is_legal(tuple: &[usize]) -> bool {
        tuple
            .iter()
            .enumerate()
            .all(|(i, x)| !tuple[i + 1..].contains(x))
    }

    /// Calls `f(compact_index, full_index)` for every legal tuple in
    /// increasing full index order.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        if let Some(stored) = &self.stored {
            for (i, &full) in stored.iter().enumerate() {
                f(i, full);
            }
            return;
        }
        if self.count == 0 {
            return;
        }
        if self.len == 0 {
            f(0, 0);
            return;
        }
        // depth-first enumeration of injective tuples in lexicographic order
        let (len, q) = (self.len, self.q);
        let mut used = vec![false; q];
        let mut digits = vec![0usize; len];
        let mut weights = vec![1usize; len];
        for i in (0..len - 1).rev() {
            weights[i] = weights[i + 1] * q;
        }
        let mut depth = 0;
        let mut next = 0usize;
        let mut compact = 0;
        let mut base = vec![0usize; len + 1];
        loop {
            // find the next free symbol at this depth
            while next < q && used[next] {
                next += 1;
            }
            if next == q {
                if depth == 0 {
                    return;
                }
                depth -= 1;
                used[digits[depth]] = false;
                next = digits[depth] + 1;
                continue;
            }
            digits[depth] = next;
            base[depth + 1] = base[depth] + next * weights[depth];
            if depth + 1 == len {
                f(compact, base[depth + 1]);
                compact += 1;
                next += 1;
            } else {
                used[next] = true;
                depth += 1;
                next = 0;
            }
        }
    }

    pub fn embed(&self, compact: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        self.for_each(|i, j| full[j] = compact[i]);
    }

    pub fn select(&self, full: &[f64], compact: &mut [f64]) {
        self.for_each(|i, j| compact[i] = full[j]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    GammaPrime,
    Surrogate,
    Gamma,
    /// `Γ′ ∘ Δ_i` for a 0-based coordinate `i`.
    HadamardMasked(usize),
    /// `Γ ∘ Δ_i`, the legality restriction of a masked operator.
    MaskedGamma(usize),
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::GammaPrime => write!(f, "gamma_prime"),
            OperatorKind::Surrogate => write!(f, "gamma_prime_surrogate"),
            OperatorKind::Gamma => write!(f, "gamma"),
            OperatorKind::HadamardMasked(i) => write!(f, "hadamard_masked({})", i + 1),
            OperatorKind::MaskedGamma(i) => write!(f, "masked_gamma({})", i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub pair: CollisionPair,
    pub terms: Vec<KroneckerTerm>,
}

/// A vertical stack of collision blocks, each a sum of Kronecker terms,
/// optionally restricted to legal rows and columns.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    params: InstanceParams,
    kind: OperatorKind,
    blocks: Vec<Block>,
    factors: FactorTable,
    row_selection: Option<LegalSet>,
    col_selection: Option<LegalSet>,
}

impl BlockOperator {
    pub fn params(&self) -> InstanceParams {
        self.params
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn factors(&self) -> &FactorTable {
        &self.factors
    }

    pub fn row_selection(&self) -> Option<&LegalSet> {
        self.row_selection.as_ref()
    }

    pub fn col_selection(&self) -> Option<&LegalSet> {
        self.col_selection.as_ref()
    }

    /// Rows of one unrestricted block, `qⁿ⁻¹`.
    pub fn block_len(&self) -> usize {
        self.params.q().pow(self.params.n() as u32 - 1)
    }

    pub fn full_cols(&self) -> usize {
        self.params.q().pow(self.params.n() as u32)
    }

    pub fn rows_per_block(&self) -> usize {
        self.row_selection
            .as_ref()
            .map_or(self.block_len(), LegalSet::count)
    }

    pub fn nrows(&self) -> usize {
        self.blocks.len() * self.rows_per_block()
    }

    pub fn ncols(&self) -> usize {
        self.col_selection
            .as_ref()
            .map_or(self.full_cols(), LegalSet::count)
    }

    /// Keeps only the blocks whose pair satisfies `keep`.
    pub fn select_blocks(&self, keep: impl Fn(&CollisionPair) -> bool) -> BlockOperator {
        let mut op = self.clone();
        op.blocks.retain(|b| keep(&b.pair));
        op
    }

    fn full_index(sel: Option<&LegalSet>, i: usize) -> usize {
        match sel {
            None => i,
            Some(s) => {
                let mut out = None;
                s.for_each(|c, f| {
                    if c == i {
                        out = Some(f);
                    }
                });
                out.expect("index within legal set")
            }
        }
    }

    /// The input string `x ∈ [q]ⁿ` labelling `row`, with its block index.
    pub fn row_input(&self, row: usize) -> (usize, Vec<usize>) {
        let per = self.rows_per_block();
        let (bi, local) = (row / per, row % per);
        let full = Self::full_index(self.row_selection.as_ref(), local);
        (bi, self.block_row_input(bi, full))
    }

    fn block_row_input(&self, bi: usize, full_local: usize) -> Vec<usize> {
        let (n, q) = (self.params.n(), self.params.q());
        let mut digits = vec![0; n - 1];
        tensor::decode(full_local, q, &mut digits);
        let pair = self.blocks[bi].pair;
        let mut x = vec![0; n];
        x[pair.a] = digits[0];
        x[pair.b] = digits[0];
        for (slot, c) in pair.rest(n).into_iter().enumerate() {
            x[c] = digits[1 + slot];
        }
        x
    }

    /// The input string `y ∈ [q]ⁿ` labelling `col`.
    pub fn col_input(&self, col: usize) -> Vec<usize> {
        let full = Self::full_index(self.col_selection.as_ref(), col);
        let mut y = vec![0; self.params.n()];
        tensor::decode(full, self.params.q(), &mut y);
        y
    }

    /// Entry of block `bi` at row input `x` and column input `y`, evaluated
    /// directly from the factor tables.
    pub(crate) fn entry_at(&self, bi: usize, x: &[usize], y: &[usize]) -> f64 {
        let q = self.params.q();
        self.blocks[bi]
            .terms
            .iter()
            .map(|t| {
                t.slots.iter().fold(t.coefficient, |acc, s| {
                    let f = self.factors.get(s.role);
                    acc * match s.coords {
                        SlotCoords::Single(c) => f.entry(x[c], y[c]),
                        SlotCoords::Pair(a, b) => f.entry(x[a], y[a] * q + y[b]),
                    }
                })
            })
            .sum()
    }

    /// Dense-free entry lookup by (possibly restricted) row and column index.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let (bi, x) = self.row_input(row);
        let y = self.col_input(col);
        self.entry_at(bi, &x, &y)
    }

    pub(crate) fn for_each_row_full(&self, mut f: impl FnMut(usize, usize)) {
        match &self.row_selection {
            Some(s) => s.for_each(&mut f),
            None => (0..self.block_len()).for_each(|i| f(i, i)),
        }
    }

    pub(crate) fn for_each_col_full(&self, mut f: impl FnMut(usize, usize)) {
        match &self.col_selection {
            Some(s) => s.for_each(&mut f),
            None => (0..self.full_cols()).for_each(|i| f(i, i)),
        }
    }

    pub(crate) fn block_row_input_full(&self, bi: usize, full_local: usize) -> Vec<usize> {
        self.block_row_input(bi, full_local)
    }
}

fn check_profile(params: &InstanceParams, alpha: &AlphaProfile) -> Result<()> {
    if alpha.alphas().len() != params.n() - 1 {
        return Err(invalid(format!(
            "alpha profile has {} coefficients, n={} needs {}",
            alpha.alphas().len(),
            params.n(),
            params.n() - 1
        )));
    }
    Ok(())
}

/// `Σ_k α_k F ⊗ E_k^{(n−2)}`, with `F` on coordinates `{0,1}` and the
/// projector on coordinates `2..n`. Zero coefficients contribute no terms.
pub fn assemble_g12(params: &InstanceParams, alpha: &AlphaProfile) -> Result<Vec<KroneckerTerm>> {
    check_profile(params, alpha)?;
    let mut terms = Vec::new();
    for (k, &a) in alpha.alphas().iter().enumerate() {
        if a > 0.0 {
            for t in weight_part(params.n(), FactorKind::F, k)? {
                terms.push(KroneckerTerm::new(a * t.coefficient, t.slots));
            }
        }
    }
    Ok(terms)
}

/// `P ⊗ E_k^{(n−2)}` for a single pair factor `P`, coefficient one.
pub fn assemble_weight_part(params: &InstanceParams, kind: FactorKind, k: usize) -> Result<Vec<KroneckerTerm>> {
    if !kind.is_pair() {
        return Err(invalid(format!("{kind:?} is not a pair factor")));
    }
    if k + 2 > params.n() {
        return Err(invalid(format!("weight {k} out of range for n={}", params.n())));
    }
    weight_part(params.n(), kind, k)
}

fn weight_part(n: usize, kind: FactorKind, k: usize) -> Result<Vec<KroneckerTerm>> {
    let rest: Vec<usize> = (2..n).collect();
    let f_slot = Slot::pair(0, 1, FactorRole::plain(kind));
    Ok(expand_weight_projector_on(&rest, k)?
        .into_iter()
        .map(|t| {
            let mut slots = vec![f_slot];
            slots.extend(t.slots);
            KroneckerTerm::new(t.coefficient, slots)
        })
        .collect())
}

/// Relabels coordinates so that `{0,1}` moves to `{a,b}` and the remaining
/// coordinates keep their increasing order.
pub fn permute_block(g12: &[KroneckerTerm], pair: CollisionPair, n: usize) -> Vec<KroneckerTerm> {
    let mut map = vec![pair.a, pair.b];
    map.extend(pair.rest(n));
    g12.iter()
        .map(|t| {
            let slots = t
                .slots
                .iter()
                .map(|s| Slot {
                    coords: match s.coords {
                        SlotCoords::Single(c) => SlotCoords::Single(map[c]),
                        SlotCoords::Pair(a, b) => SlotCoords::Pair(map[a], map[b]),
                    },
                    role: s.role,
                })
                .collect();
            KroneckerTerm::new(t.coefficient, slots)
        })
        .collect()
}

fn validate_g12(n: usize, g12: &[KroneckerTerm]) -> Result<()> {
    for t in g12 {
        match t.pair_slot() {
            Some(s) if s.coords == SlotCoords::Pair(0, 1) => {}
            _ => return Err(invalid("every G_{1,2} term needs its pair factor on coordinates {1,2}")),
        }
        if t.slots.len() != n - 1 || (2..n).any(|c| t.single_slot(c).is_none()) {
            return Err(invalid("every G_{1,2} term needs one square factor per coordinate 3..n"));
        }
    }
    Ok(())
}

fn guard_columns(params: &InstanceParams, limits: &Limits) -> Result<()> {
    let needed = (params.q() as u128).pow(params.n() as u32);
    if needed > limits.vector_len as u128 {
        return Err(Error::ResourceGuard {
            what: "column dimension q^n",
            needed,
            limit: limits.vector_len as u128,
        });
    }
    Ok(())
}

/// Stacks the permuted images of `g12` for every pair.
pub fn stack_blocks(params: &InstanceParams, g12: Vec<KroneckerTerm>, limits: &Limits) -> Result<BlockOperator> {
    guard_columns(params, limits)?;
    validate_g12(params.n(), &g12)?;
    let blocks = CollisionPair::all(params.n())
        .into_iter()
        .map(|pair| Block {
            pair,
            terms: permute_block(&g12, pair, params.n()),
        })
        .collect();
    Ok(BlockOperator {
        params: *params,
        kind: OperatorKind::GammaPrime,
        blocks,
        factors: FactorTable::new(params.q())?,
        row_selection: None,
        col_selection: None,
    })
}

/// `Γ′` for the given profile.
pub fn stack_gamma_prime(params: &InstanceParams, alpha: &AlphaProfile, limits: &Limits) -> Result<BlockOperator> {
    stack_blocks(params, assemble_g12(params, alpha)?, limits)
}

/// Applies the Δ₁ surrogate map to every term of `Γ′`: in blocks `{1,b}` the
/// pair factor `F` becomes its Δ₁ image (`F₀` is fixed, `F₁ ↦ −F₀ + image`);
/// elsewhere the coordinate-1 factor maps `E₀ ↦ E₀`, `E₁ ↦ −E₀`.
pub fn surrogate(op: &BlockOperator) -> Result<BlockOperator> {
    if op.kind != OperatorKind::GammaPrime {
        return Err(invalid(format!("surrogate needs gamma_prime, got {}", op.kind)));
    }
    let blocks = op
        .blocks
        .iter()
        .map(|block| {
            let mut terms = Vec::new();
            for t in &block.terms {
                if block.pair.contains(0) {
                    let role = t.pair_slot().expect("pair slot").role;
                    let image = FactorRole::plain(FactorKind::FDelta1Image);
                    let with = |coef: f64, role: FactorRole| {
                        let mut nt = t.clone();
                        nt.coefficient = coef;
                        nt.pair_slot_mut().unwrap().role = role;
                        nt
                    };
                    match role.kind {
                        FactorKind::F => terms.push(with(t.coefficient, image)),
                        FactorKind::F0 => terms.push(t.clone()),
                        FactorKind::F1 => {
                            terms.push(with(-t.coefficient, FactorRole::plain(FactorKind::F0)));
                            terms.push(with(t.coefficient, image));
                        }
                        _ => return Err(invalid(format!("no surrogate image for {role}"))),
                    }
                } else {
                    let mut nt = t.clone();
                    let slot = nt.single_slot_mut(0).expect("coordinate 1 slot");
                    match slot.role.kind {
                        FactorKind::E0 => {}
                        FactorKind::E1 => {
                            slot.role = FactorRole::plain(FactorKind::E0);
                            nt.coefficient = -nt.coefficient;
                        }
                        _ => return Err(invalid(format!("no surrogate image for {}", slot.role))),
                    }
                    terms.push(nt);
                }
            }
            Ok(Block {
                pair: block.pair,
                terms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockOperator {
        kind: OperatorKind::Surrogate,
        blocks,
        ..op.clone()
    })
}

/// `Γ′₁` for the given profile.
pub fn build_surrogate_gamma1(params: &InstanceParams, alpha: &AlphaProfile, limits: &Limits) -> Result<BlockOperator> {
    surrogate(&stack_gamma_prime(params, alpha, limits)?)
}

/// `op ∘ Δ_i` for a 0-based coordinate `i`, applied factor by factor.
pub fn hadamard_mask(op: &BlockOperator, i: usize) -> Result<BlockOperator> {
    let n = op.params.n();
    if i >= n {
        return Err(invalid(format!("coordinate {i} out of range for n={n}")));
    }
    let kind = match op.kind {
        OperatorKind::GammaPrime | OperatorKind::Surrogate => OperatorKind::HadamardMasked(i),
        OperatorKind::Gamma => OperatorKind::MaskedGamma(i),
        k @ (OperatorKind::HadamardMasked(j) | OperatorKind::MaskedGamma(j)) if j == i => k,
        k => return Err(invalid(format!("{k} is already masked on another coordinate"))),
    };
    let mut blocks = op.blocks.clone();
    for block in &mut blocks {
        let slot = if i == block.pair.a {
            MaskSlot::PairSlot1
        } else if i == block.pair.b {
            MaskSlot::PairSlot2
        } else {
            MaskSlot::Column
        };
        for t in &mut block.terms {
            let s = match slot {
                MaskSlot::Column => t.single_slot_mut(i),
                _ => t.pair_slot_mut(),
            }
            .ok_or_else(|| invalid("term does not cover the masked coordinate"))?;
            let masked = mask_factor(op.factors.get(s.role), slot)?;
            s.role = masked.role();
        }
    }
    Ok(BlockOperator {
        kind,
        blocks,
        ..op.clone()
    })
}

/// `Γ = P_row Γ′ P_col`: keeps columns with pairwise distinct symbols and,
/// in every block, rows whose only repeated pair is the collision pair.
pub fn restrict_to_legal(op: &BlockOperator, limits: &Limits) -> Result<BlockOperator> {
    let kind = match op.kind {
        OperatorKind::GammaPrime => OperatorKind::Gamma,
        OperatorKind::HadamardMasked(i) => OperatorKind::MaskedGamma(i),
        k => return Err(invalid(format!("cannot restrict {k} to legal indices"))),
    };
    let (n, q) = (op.params.n(), op.params.q());
    Ok(BlockOperator {
        kind,
        row_selection: Some(LegalSet::new(n - 1, q, limits.stored_legal)),
        col_selection: Some(LegalSet::new(n, q, limits.stored_legal)),
        ..op.clone()
    })
}

/// `(rows, cols)` respecting any legality restriction.
pub fn count_dimensions(op: &BlockOperator) -> (usize, usize) {
    (op.nrows(), op.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::Mask;

    fn params(n: usize, q: usize) -> InstanceParams {
        InstanceParams::new(n, q).unwrap()
    }

    #[test]
    fn default_profile_values() {
        let p = default_alpha_profile(8).unwrap();
        assert!((p.alphas()[0] - 0.5).abs() < 1e-15);
        assert!((p.alphas()[1] - 0.375).abs() < 1e-15);
        assert_eq!(p.alphas()[4], 0.0);
        let p = default_alpha_profile(27).unwrap();
        assert!((p.alpha0() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.r() - 9.0).abs() < 1e-12);
        assert!(default_alpha_profile(1).is_err());
        for n in 2..200 {
            assert!(default_alpha_profile(n).unwrap().satisfies_constraints(n, 1e-15), "n={n}");
        }
    }

    #[test]
    fn grid_profiles_meet_constraints() {
        for n in 2..60 {
            for r in 1..=n {
                let p = grid_alpha_profile(n, r).unwrap();
                assert!(p.satisfies_constraints(n, 1e-15), "n={n} r={r}");
            }
            let best = best_grid_alpha_profile(n).unwrap();
            assert!(best.alpha0() > 0.0);
        }
        assert!(grid_alpha_profile(5, 0).is_err());
    }

    #[test]
    fn profile_parsing() {
        let p = AlphaProfile::parse("0.5\n0.25\n\n0\n", "file").unwrap();
        assert_eq!(p.alphas(), &[0.5, 0.25, 0.0]);
        assert!(AlphaProfile::parse("0.5\n-1\n", "file").is_err());
        assert!(AlphaProfile::parse("abc", "file").is_err());
    }

    #[test]
    fn pairs_are_lexicographic() {
        let pairs: Vec<String> = CollisionPair::all(5).iter().map(|p| p.to_string()).collect();
        assert_eq!(&pairs[..6], &["{1,2}", "{1,3}", "{1,4}", "{1,5}", "{2,3}", "{2,4}"]);
        assert_eq!(pairs.len(), 10);
        assert!(CollisionPair::new(2, 2, 4).is_err());
        assert!(CollisionPair::new(0, 4, 4).is_err());
    }

    #[test]
    fn g12_terms() {
        let alpha = AlphaProfile::new(vec![0.7, 0.2], 1.0, "t").unwrap();
        let terms = assemble_g12(&params(3, 4), &alpha).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].coefficient, 0.7);
        assert_eq!(terms[0].slots[1].role.kind, FactorKind::E0);
        assert_eq!(terms[1].slots[1].role.kind, FactorKind::E1);
        assert_eq!(terms[0].row_dim(4), 16);
        assert_eq!(terms[0].col_dim(4), 64);

        let alpha = default_alpha_profile(4).unwrap();
        let count: usize = alpha
            .alphas()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(k, _)| [1, 2, 1][k])
            .sum();
        assert_eq!(assemble_g12(&params(4, 5), &alpha).unwrap().len(), count);

        let bad = AlphaProfile::new(vec![0.5], 1.0, "t").unwrap();
        assert!(assemble_g12(&params(4, 5), &bad).is_err());

        // n = 2 degenerates to α₀·F
        let alpha = default_alpha_profile(2).unwrap();
        let terms = assemble_g12(&params(2, 3), &alpha).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].slots.len(), 1);
    }

    #[test]
    fn permutation_moves_slots() {
        let alpha = default_alpha_profile(3).unwrap();
        let g12 = assemble_g12(&params(3, 3), &alpha).unwrap();
        assert_eq!(permute_block(&g12, CollisionPair::new(0, 1, 3).unwrap(), 3), g12);
        let moved = permute_block(&g12, CollisionPair::new(1, 2, 3).unwrap(), 3);
        assert_eq!(moved[0].pair_slot().unwrap().coords, SlotCoords::Pair(1, 2));
        assert!(moved[0].single_slot(0).is_some());
    }

    #[test]
    fn stack_shapes() {
        let lim = Limits::default();
        let op = stack_gamma_prime(&params(3, 4), &default_alpha_profile(3).unwrap(), &lim).unwrap();
        assert_eq!(op.blocks().len(), 3);
        let op = stack_gamma_prime(&params(4, 8), &default_alpha_profile(4).unwrap(), &lim).unwrap();
        assert_eq!(count_dimensions(&op), (3072, 4096));
        let small = Limits {
            vector_len: 1000,
            ..lim
        };
        assert!(matches!(
            stack_gamma_prime(&params(4, 8), &default_alpha_profile(4).unwrap(), &small),
            Err(Error::ResourceGuard { .. })
        ));
    }

    #[test]
    fn legal_counts() {
        let lim = Limits::default();
        let op = stack_gamma_prime(&params(3, 4), &default_alpha_profile(3).unwrap(), &lim).unwrap();
        let g = restrict_to_legal(&op, &lim).unwrap();
        assert_eq!(g.kind(), OperatorKind::Gamma);
        assert_eq!(g.rows_per_block(), 12);
        assert_eq!(count_dimensions(&g), (36, 24));

        let op2 = stack_gamma_prime(&params(3, 2), &default_alpha_profile(3).unwrap(), &lim).unwrap();
        let g2 = restrict_to_legal(&op2, &lim).unwrap();
        assert_eq!(g2.ncols(), 0);

        let s = surrogate(&op).unwrap();
        assert!(restrict_to_legal(&s, &lim).is_err());
    }

    #[test]
    fn stored_and_implicit_legal_sets_agree() {
        for (len, q) in [(0, 3), (1, 4), (2, 2), (3, 5), (4, 6), (3, 2)] {
            let stored = LegalSet::new(len, q, usize::MAX);
            let implicit = LegalSet::new(len, q, 0);
            assert!(stored.is_stored());
            assert!(!implicit.is_stored() || implicit.count() == 0);
            let mut a = Vec::new();
            let mut b = Vec::new();
            stored.for_each(|i, f| a.push((i, f)));
            implicit.for_each(|i, f| b.push((i, f)));
            assert_eq!(a, b);
            assert_eq!(a.len(), stored.count());
            let brute: Vec<usize> = (0..q.pow(len as u32))
                .filter(|&i| {
                    let mut d = vec![0; len];
                    tensor::decode(i, q, &mut d);
                    LegalSet::is_legal(&d)
                })
                .collect();
            assert_eq!(a.iter().map(|p| p.1).collect::<Vec<_>>(), brute);
        }
    }

    #[test]
    fn legal_fraction_for_quadratic_alphabet() {
        let s = LegalSet::new(4, 16, 0);
        let frac = s.count() as f64 / s.full_len() as f64;
        assert!((frac - 15.0 * 14.0 * 13.0 / 4096.0).abs() < 1e-12);
        assert!((frac - 0.666).abs() < 1e-3);
    }

    #[test]
    fn masking_keeps_term_count_and_is_idempotent() {
        let lim = Limits::default();
        let op = stack_gamma_prime(&params(4, 5), &default_alpha_profile(4).unwrap(), &lim).unwrap();
        let m = hadamard_mask(&op, 0).unwrap();
        assert_eq!(m.kind(), OperatorKind::HadamardMasked(0));
        for (b0, b1) in op.blocks().iter().zip(m.blocks()) {
            assert_eq!(b0.terms.len(), b1.terms.len());
        }
        let mm = hadamard_mask(&m, 0).unwrap();
        assert_eq!(mm.blocks(), m.blocks());
        assert!(hadamard_mask(&m, 1).is_err());
        assert!(hadamard_mask(&op, 4).is_err());
        let masked = m
            .blocks()
            .iter()
            .flat_map(|b| b.terms.iter().flat_map(|t| t.slots.iter()))
            .filter(|s| s.role.mask != Mask::None)
            .count();
        assert_eq!(masked, m.blocks().iter().map(|b| b.terms.len()).sum::<usize>());
    }
}
