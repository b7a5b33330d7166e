//! Factor matrices of the Hamming association scheme and the Kronecker-term
//! algebra used to assemble adversary blocks.
//!
//! Every operator here is basis independent, so factors are built from
//! entrywise formulas. The `q × q²` factors index their columns by the pair
//! `(y1, y2) ↦ y1·q + y2`.

use std::fmt;

use itertools::Itertools;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::spectral::{DenseMatrix, LinearOperator};
use crate::tensor;

/// Input length `n` and alphabet size `q` of an element distinctness instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct InstanceParams {
    n: usize,
    q: usize,
}

impl InstanceParams {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("n must be at least 2, got {n}")));
        }
        if q < 2 {
            return Err(invalid(format!("q must be at least 2, got {q}")));
        }
        Ok(Self { n, q })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `qⁿ`, the number of columns of `Γ′`, or `None` on overflow.
    pub fn column_dim(&self) -> Option<usize> {
        self.q.checked_pow(self.n as u32)
    }

    /// `qⁿ⁻¹`, the number of rows of one unrestricted block.
    pub fn block_row_dim(&self) -> Option<usize> {
        self.q.checked_pow(self.n as u32 - 1)
    }

    /// Number of collision pairs, `n(n−1)/2`.
    pub fn pair_count(&self) -> usize {
        self.n * (self.n - 1) / 2
    }
}

impl fmt::Display for InstanceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}, q={}", self.n, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FactorKind {
    E0,
    E1,
    F0,
    F1,
    F,
    /// Image of `F` under the Δ₁ surrogate map: `Σ_{i≠0} e_i (e₀ ⊗ e_i)*`.
    FDelta1Image,
}

impl FactorKind {
    /// True for the `q × q²` factors that cover a collision pair.
    pub fn is_pair(self) -> bool {
        !matches!(self, FactorKind::E0 | FactorKind::E1)
    }
}

/// Hadamard mask carried by a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Mask {
    None,
    /// Square factors: entries with `x = y` zeroed.
    Diagonal,
    /// Pair factors: entries with `x = y1` zeroed.
    Slot1,
    /// Pair factors: entries with `x = y2` zeroed.
    Slot2,
}

/// Where a Δ mask hits a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSlot {
    Column,
    PairSlot1,
    PairSlot2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FactorRole {
    pub kind: FactorKind,
    pub mask: Mask,
}

impl FactorRole {
    pub const fn plain(kind: FactorKind) -> Self {
        Self {
            kind,
            mask: Mask::None,
        }
    }

    pub const fn masked(kind: FactorKind, mask: Mask) -> Self {
        Self { kind, mask }
    }

    pub fn is_pair(&self) -> bool {
        self.kind.is_pair()
    }

    fn is_valid(&self) -> bool {
        match self.mask {
            Mask::None => true,
            Mask::Diagonal => !self.kind.is_pair(),
            Mask::Slot1 | Mask::Slot2 => self.kind.is_pair(),
        }
    }
}

impl fmt::Display for FactorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            FactorKind::E0 => "E0",
            FactorKind::E1 => "E1",
            FactorKind::F0 => "F0",
            FactorKind::F1 => "F1",
            FactorKind::F => "F",
            FactorKind::FDelta1Image => "F_delta1_image",
        };
        let suffix = match self.mask {
            Mask::None => "",
            Mask::Diagonal => "_masked",
            Mask::Slot1 => "_masked_slot1",
            Mask::Slot2 => "_masked_slot2",
        };
        write!(f, "{base}{suffix}")
    }
}

/// Closed-form shape of a factor, used by the fast contraction kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorStructure {
    /// `entry(x, y) = all + diag·[x = y]`
    Square { all: f64, diag: f64 },
    /// `entry(x, (y1, y2)) = all + slot1·[x = y1] + slot2·[x = y2] + both·[x = y1 = y2]`
    Pair {
        all: f64,
        slot1: f64,
        slot2: f64,
        both: f64,
    },
    /// No closed form detected; kernels fall back to dense contraction.
    Dense,
}

/// A small dense factor (`q × q` or `q × q²`) tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    role: FactorRole,
    q: usize,
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    structure: FactorStructure,
}

const STRUCTURE_TOL: f64 = 1e-14;

impl FactorMatrix {
    fn from_fn(role: FactorRole, q: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let cols = if role.is_pair() { q * q } else { q };
        let mut entries = Vec::with_capacity(q * cols);
        for r in 0..q {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        let mut m = Self {
            role,
            q,
            rows: q,
            cols,
            entries,
            structure: FactorStructure::Dense,
        };
        m.structure = m.detect_structure();
        m
    }

    pub fn role(&self) -> FactorRole {
        self.role
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn structure(&self) -> FactorStructure {
        self.structure
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_vec(self.rows, self.cols, self.entries.clone())
    }

    /// Fits the closed-form model from a handful of entries, then checks it
    /// against every entry.
    fn detect_structure(&self) -> FactorStructure {
        let q = self.q;
        let candidate = if self.role.is_pair() {
            let all = self.entry(0, q + 1);
            let slot1 = self.entry(0, 1) - all;
            let slot2 = self.entry(0, q) - all;
            let both = self.entry(0, 0) - all - slot1 - slot2;
            FactorStructure::Pair {
                all,
                slot1,
                slot2,
                both,
            }
        } else {
            let all = self.entry(1, 0);
            FactorStructure::Square {
                all,
                diag: self.entry(0, 0) - all,
            }
        };
        let fits = (0..self.rows).all(|r| {
            (0..self.cols).all(|c| (model_entry(candidate, q, r, c) - self.entry(r, c)).abs() <= STRUCTURE_TOL)
        });
        if fits {
            candidate
        } else {
            FactorStructure::Dense
        }
    }
}

fn model_entry(s: FactorStructure, q: usize, r: usize, c: usize) -> f64 {
    match s {
        FactorStructure::Square { all, diag } => all + if r == c { diag } else { 0.0 },
        FactorStructure::Pair {
            all,
            slot1,
            slot2,
            both,
        } => {
            let (y1, y2) = (c / q, c % q);
            let mut v = all;
            if r == y1 {
                v += slot1;
            }
            if r == y2 {
                v += slot2;
            }
            if r == y1 && r == y2 {
                v += both;
            }
            v
        }
        FactorStructure::Dense => f64::NAN,
    }
}

fn check_q(q: usize) -> Result<()> {
    if q < 2 {
        Err(invalid(format!("alphabet size must be at least 2, got {q}")))
    } else {
        Ok(())
    }
}

#[inline]
fn e1_entry(q: f64, x: usize, y: usize) -> f64 {
    if x == y {
        1.0 - 1.0 / q
    } else {
        -1.0 / q
    }
}

fn base_entry(kind: FactorKind, q: usize, row: usize, col: usize) -> f64 {
    let qf = q as f64;
    let inv_sqrt = 1.0 / qf.sqrt();
    match kind {
        FactorKind::E0 => 1.0 / qf,
        FactorKind::E1 => e1_entry(qf, row, col),
        FactorKind::F0 => qf.powf(-1.5),
        FactorKind::F1 => {
            let (y1, y2) = (col / q, col % q);
            inv_sqrt * (e1_entry(qf, row, y1) + e1_entry(qf, row, y2))
        }
        FactorKind::F => base_entry(FactorKind::F0, q, row, col) + base_entry(FactorKind::F1, q, row, col),
        FactorKind::FDelta1Image => inv_sqrt * e1_entry(qf, row, col % q),
    }
}

fn mask_keeps(mask: Mask, q: usize, row: usize, col: usize) -> bool {
    match mask {
        Mask::None => true,
        Mask::Diagonal => row != col,
        Mask::Slot1 => row != col / q,
        Mask::Slot2 => row != col % q,
    }
}

/// Builds any valid role for alphabet size `q`.
pub fn build_factor(role: FactorRole, q: usize) -> Result<FactorMatrix> {
    check_q(q)?;
    if !role.is_valid() {
        return Err(invalid(format!("mask {:?} is not applicable to {:?}", role.mask, role.kind)));
    }
    Ok(FactorMatrix::from_fn(role, q, |r, c| {
        if mask_keeps(role.mask, q, r, c) {
            base_entry(role.kind, q, r, c)
        } else {
            0.0
        }
    }))
}

/// `E₀`: every entry `1/q`.
pub fn build_e0(q: usize) -> Result<FactorMatrix> {
    build_factor(FactorRole::plain(FactorKind::E0), q)
}

/// `E₁ = I − E₀`.
pub fn build_e1(q: usize) -> Result<FactorMatrix> {
    build_factor(FactorRole::plain(FactorKind::E1), q)
}

/// `F₀ = e₀(e₀ ⊗ e₀)*`: every entry `q^{-3/2}`.
pub fn build_f0(q: usize) -> Result<FactorMatrix> {
    build_factor(FactorRole::plain(FactorKind::F0), q)
}

/// `F₁`, with entry `q^{-1/2}(E₁[x,y1] + E₁[x,y2])`.
pub fn build_f1(q: usize) -> Result<FactorMatrix> {
    build_factor(FactorRole::plain(FactorKind::F1), q)
}

/// `F = F₀ + F₁`.
pub fn build_f(q: usize) -> Result<FactorMatrix> {
    build_factor(FactorRole::plain(FactorKind::F), q)
}

/// The Δ₁ surrogate image of `F`, with entry `q^{-1/2}·E₁[x, y2]`.
pub fn delta1_image_of_f(q: usize) -> Result<FactorMatrix> {
    build_factor(FactorRole::plain(FactorKind::FDelta1Image), q)
}

/// Hadamard product of a factor with the 0/1 inequality pattern of `slot`.
/// Masking an already masked factor with the same slot is a no-op.
pub fn mask_factor(factor: &FactorMatrix, slot: MaskSlot) -> Result<FactorMatrix> {
    let mask = match (factor.role.is_pair(), slot) {
        (false, MaskSlot::Column) => Mask::Diagonal,
        (true, MaskSlot::PairSlot1) => Mask::Slot1,
        (true, MaskSlot::PairSlot2) => Mask::Slot2,
        _ => {
            return Err(invalid(format!(
                "cannot mask {} on {:?}",
                factor.role, slot
            )))
        }
    };
    if factor.role.mask == mask {
        return Ok(factor.clone());
    }
    if factor.role.mask != Mask::None {
        return Err(invalid(format!("{} already carries a different mask", factor.role)));
    }
    let q = factor.q;
    let role = FactorRole::masked(factor.role.kind, mask);
    Ok(FactorMatrix::from_fn(role, q, |r, c| {
        if mask_keeps(mask, q, r, c) {
            factor.entry(r, c)
        } else {
            0.0
        }
    }))
}

/// All factors for one alphabet size, looked up by role.
#[derive(Debug, Clone)]
pub struct FactorTable {
    q: usize,
    factors: Vec<FactorMatrix>,
}

const ALL_KINDS: [FactorKind; 6] = [
    FactorKind::E0,
    FactorKind::E1,
    FactorKind::F0,
    FactorKind::F1,
    FactorKind::F,
    FactorKind::FDelta1Image,
];
const ALL_MASKS: [Mask; 4] = [Mask::None, Mask::Diagonal, Mask::Slot1, Mask::Slot2];

impl FactorTable {
    pub fn new(q: usize) -> Result<Self> {
        let mut factors = Vec::new();
        for kind in ALL_KINDS {
            for mask in ALL_MASKS {
                let role = FactorRole::masked(kind, mask);
                if role.is_valid() {
                    factors.push(build_factor(role, q)?);
                }
            }
        }
        Ok(Self { q, factors })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, role: FactorRole) -> &FactorMatrix {
        self.factors
            .iter()
            .find(|f| f.role == role)
            .expect("factor table holds every valid role")
    }
}

/// Which coordinates carry `E₁` in one summand of a weight projector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeightPattern {
    bits: Vec<bool>,
}

impl WeightPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// All `C(len, k)` patterns of weight `k`, lexicographic in the chosen positions.
    pub fn all_of_weight(len: usize, k: usize) -> Vec<WeightPattern> {
        (0..len)
            .combinations(k)
            .map(|chosen| {
                let mut bits = vec![false; len];
                for i in chosen {
                    bits[i] = true;
                }
                WeightPattern { bits }
            })
            .collect()
    }
}

/// Coordinates covered by one Kronecker slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotCoords {
    Single(usize),
    /// A collision pair: one row symbol, two column coordinates.
    Pair(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub coords: SlotCoords,
    pub role: FactorRole,
}

impl Slot {
    pub fn single(coord: usize, role: FactorRole) -> Self {
        debug_assert!(!role.is_pair());
        Self {
            coords: SlotCoords::Single(coord),
            role,
        }
    }

    pub fn pair(a: usize, b: usize, role: FactorRole) -> Self {
        debug_assert!(role.is_pair());
        Self {
            coords: SlotCoords::Pair(a, b),
            role,
        }
    }

    fn row_dim(&self, q: usize) -> usize {
        q
    }

    fn col_dim(&self, q: usize) -> usize {
        match self.coords {
            SlotCoords::Single(_) => q,
            SlotCoords::Pair(..) => q * q,
        }
    }
}

/// `coefficient · (⊗ slots)`, one summand of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerTerm {
    pub coefficient: f64,
    pub slots: Vec<Slot>,
}

impl KroneckerTerm {
    pub fn new(coefficient: f64, slots: Vec<Slot>) -> Self {
        Self { coefficient, slots }
    }

    pub fn row_dim(&self, q: usize) -> usize {
        self.slots.iter().map(|s| s.row_dim(q)).product()
    }

    pub fn col_dim(&self, q: usize) -> usize {
        self.slots.iter().map(|s| s.col_dim(q)).product()
    }

    pub fn pair_slot(&self) -> Option<&Slot> {
        self.slots.iter().find(|s| matches!(s.coords, SlotCoords::Pair(..)))
    }

    /// The single-coordinate slot sitting on `coord`, if any.
    pub fn single_slot(&self, coord: usize) -> Option<&Slot> {
        self.slots
            .iter()
            .find(|s| s.coords == SlotCoords::Single(coord))
    }

    pub fn single_slot_mut(&mut self, coord: usize) -> Option<&mut Slot> {
        self.slots
            .iter_mut()
            .find(|s| s.coords == SlotCoords::Single(coord))
    }

    pub fn pair_slot_mut(&mut self) -> Option<&mut Slot> {
        self.slots
            .iter_mut()
            .find(|s| matches!(s.coords, SlotCoords::Pair(..)))
    }
}

/// `E_k^{(n′)}` on coordinates `0..n′`, as `C(n′, k)` unit-coefficient terms.
pub fn expand_weight_projector(n_coords: usize, k: usize) -> Result<Vec<KroneckerTerm>> {
    let coords: Vec<usize> = (0..n_coords).collect();
    expand_weight_projector_on(&coords, k)
}

/// `E_k` over an explicit list of coordinates.
pub fn expand_weight_projector_on(coords: &[usize], k: usize) -> Result<Vec<KroneckerTerm>> {
    if k > coords.len() {
        return Err(invalid(format!(
            "weight {k} exceeds coordinate count {}",
            coords.len()
        )));
    }
    Ok(WeightPattern::all_of_weight(coords.len(), k)
        .into_iter()
        .map(|pattern| {
            let slots = coords
                .iter()
                .zip(pattern.bits())
                .map(|(&c, &one)| {
                    let kind = if one { FactorKind::E1 } else { FactorKind::E0 };
                    Slot::single(c, FactorRole::plain(kind))
                })
                .collect();
            KroneckerTerm::new(1.0, slots)
        })
        .collect())
}

/// A square operator on `[q]^m` given as a sum of Kronecker products of
/// `q × q` factors, one per coordinate.
#[derive(Debug, Clone)]
pub struct KroneckerSum {
    n_coords: usize,
    factors: FactorTable,
    terms: Vec<KroneckerTerm>,
}

impl KroneckerSum {
    pub fn new(n_coords: usize, q: usize, terms: Vec<KroneckerTerm>) -> Result<Self> {
        for t in &terms {
            if t.slots.len() != n_coords {
                return Err(invalid("every term must cover each coordinate once"));
            }
            for c in 0..n_coords {
                match t.single_slot(c) {
                    Some(s) if !s.role.is_pair() => {}
                    _ => return Err(invalid(format!("coordinate {c} lacks a square factor"))),
                }
            }
        }
        Ok(Self {
            n_coords,
            factors: FactorTable::new(q)?,
            terms,
        })
    }

    /// `Σ_k weights[k] · E_k^{(m)}`.
    pub fn weighted_projectors(n_coords: usize, q: usize, weights: &[(usize, f64)]) -> Result<Self> {
        let mut terms = Vec::new();
        for &(k, w) in weights {
            for mut t in expand_weight_projector(n_coords, k)? {
                t.coefficient *= w;
                terms.push(t);
            }
        }
        Self::new(n_coords, q, terms)
    }

    pub fn dim(&self) -> usize {
        self.factors.q().pow(self.n_coords as u32)
    }

    pub fn terms(&self) -> &[KroneckerTerm] {
        &self.terms
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let q = self.factors.q();
        let dim = self.dim();
        let mut out = DenseMatrix::zeros(dim, dim);
        let mut xd = vec![0; self.n_coords];
        let mut yd = vec![0; self.n_coords];
        for row in 0..dim {
            tensor::decode(row, q, &mut xd);
            for col in 0..dim {
                tensor::decode(col, q, &mut yd);
                let mut v = 0.0;
                for t in &self.terms {
                    let mut p = t.coefficient;
                    for c in 0..self.n_coords {
                        let f = self.factors.get(t.single_slot(c).unwrap().role);
                        p *= f.entry(xd[c], yd[c]);
                    }
                    v += p;
                }
                out.set(row, col, v);
            }
        }
        out
    }

    fn apply_impl(&self, x: &[f64], y: &mut [f64], transpose: bool) {
        let q = self.factors.q();
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut cur = vec![0.0; x.len()];
        let mut next = vec![0.0; x.len()];
        for t in &self.terms {
            cur.copy_from_slice(x);
            for c in 0..self.n_coords {
                let f = self.factors.get(t.single_slot(c).unwrap().role);
                tensor::apply_square_mode(&cur, &mut next, q, self.n_coords, c, f, transpose);
                std::mem::swap(&mut cur, &mut next);
            }
            for (yi, ci) in y.iter_mut().zip(&cur) {
                *yi += t.coefficient * ci;
            }
        }
    }
}

impl LinearOperator for KroneckerSum {
    fn nrows(&self) -> usize {
        self.dim()
    }

    fn ncols(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_impl(x, y, false);
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.apply_impl(x, y, true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
        let d = a.max_abs_diff(b);
        assert!(d <= tol, "max abs diff {d} > {tol}");
    }

    #[test]
    fn e0_entries() {
        let e0 = build_e0(3).unwrap();
        assert!(e0.entries().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let e0 = build_e0(2).unwrap();
        assert_eq!(e0.entries(), &[0.5, 0.5, 0.5, 0.5]);
        assert!(build_e0(1).is_err());
    }

    #[test]
    fn e1_entries_and_trace() {
        let e1 = build_e1(3).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((e1.entry(r, c) - want).abs() < 1e-15);
            }
        }
        assert_eq!(build_e1(2).unwrap().entries(), &[0.5, -0.5, -0.5, 0.5]);
        for q in 2..10 {
            let d = build_e1(q).unwrap().to_dense();
            let tr: f64 = (0..q).map(|i| d.get(i, i)).sum();
            assert!((tr - (q as f64 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn projector_identities() {
        for q in 2..=16 {
            let e0 = build_e0(q).unwrap().to_dense();
            let e1 = build_e1(q).unwrap().to_dense();
            assert_close(&e0.matmul(&e0), &e0, 1e-12);
            assert_close(&e1.matmul(&e1), &e1, 1e-12);
            assert_close(&e0.transpose(), &e0, 1e-12);
            assert_close(&e1.transpose(), &e1, 1e-12);
            assert!(e0.matmul(&e1).max_abs() <= 1e-12);
            assert_close(&e0.add(&e1), &DenseMatrix::identity(q), 1e-12);
        }
    }

    #[test]
    fn f0_and_f1_entries() {
        let f0 = build_f0(4).unwrap();
        assert_eq!((f0.rows(), f0.cols()), (4, 16));
        assert!(f0.entries().iter().all(|&v| (v - 0.125).abs() < 1e-15));
        assert!(build_f0(1).is_err());

        let f1 = build_f1(4).unwrap();
        // x = y1 = y2
        assert!((f1.entry(2, 2 * 4 + 2) - 0.75).abs() < 1e-15);
        // x differs from both
        assert!((f1.entry(0, 4 + 2) - (-0.25)).abs() < 1e-15);
        // exactly one equal: (1 − 2/q)/√q
        assert!((f1.entry(1, 4 + 3) - 0.25).abs() < 1e-15);

        let f = build_f(4).unwrap();
        assert!((f.entry(3, 3 * 4 + 3) - 0.875).abs() < 1e-15);
        let f2 = build_f(2).unwrap();
        assert_eq!((f2.rows(), f2.cols()), (2, 4));
        assert!(f2.entries().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn f_products() {
        for q in 2..=9 {
            let f0 = build_f0(q).unwrap().to_dense();
            let f1 = build_f1(q).unwrap().to_dense();
            let f = build_f(q).unwrap().to_dense();
            let e0 = build_e0(q).unwrap().to_dense();
            assert_close(&f0.matmul(&f0.transpose()), &e0, 1e-12);
            assert!(f0.matmul(&f1.transpose()).max_abs() <= 1e-14);
            assert_close(&f.matmul(&f0.transpose()), &e0, 1e-12);
        }
    }

    #[test]
    fn delta1_image_entries() {
        let d = delta1_image_of_f(4).unwrap();
        assert!((d.entry(1, 3 * 4 + 1) - 0.375).abs() < 1e-15);
        assert!((d.entry(1, 3 * 4 + 2) - (-0.125)).abs() < 1e-15);
    }

    #[test]
    fn masks() {
        let e0m = mask_factor(&build_e0(3).unwrap(), MaskSlot::Column).unwrap();
        let e1m = mask_factor(&build_e1(3).unwrap(), MaskSlot::Column).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let (w0, w1) = if r == c { (0.0, 0.0) } else { (1.0 / 3.0, -1.0 / 3.0) };
                assert!((e0m.entry(r, c) - w0).abs() < 1e-15);
                assert!((e1m.entry(r, c) - w1).abs() < 1e-15);
            }
        }
        let fm = mask_factor(&build_f(4).unwrap(), MaskSlot::PairSlot1).unwrap();
        for x in 0..4 {
            for y2 in 0..4 {
                assert_eq!(fm.entry(x, x * 4 + y2), 0.0);
            }
        }
        assert_eq!(fm.role().to_string(), "F_masked_slot1");
        // idempotent, and incompatible slots rejected
        assert_eq!(mask_factor(&fm, MaskSlot::PairSlot1).unwrap(), fm);
        assert!(mask_factor(&fm, MaskSlot::PairSlot2).is_err());
        assert!(mask_factor(&build_e0(3).unwrap(), MaskSlot::PairSlot1).is_err());
        assert!(mask_factor(&build_f(3).unwrap(), MaskSlot::Column).is_err());
    }

    #[test]
    fn surrogate_images_agree_on_mask() {
        // E1 and −E0 agree off the diagonal; F and its Δ₁ image agree where x ≠ y1.
        for q in 2..=7 {
            let e1m = mask_factor(&build_e1(q).unwrap(), MaskSlot::Column).unwrap();
            let e0m = mask_factor(&build_e0(q).unwrap(), MaskSlot::Column).unwrap();
            for (a, b) in e1m.entries().iter().zip(e0m.entries()) {
                assert!((a + b).abs() < 1e-15);
            }
            let e0 = build_e0(q).unwrap();
            assert_eq!(mask_factor(&e0, MaskSlot::Column).unwrap().entries(), e0m.entries());

            let fm = mask_factor(&build_f(q).unwrap(), MaskSlot::PairSlot1).unwrap();
            let dm = mask_factor(&delta1_image_of_f(q).unwrap(), MaskSlot::PairSlot1).unwrap();
            for (a, b) in fm.entries().iter().zip(dm.entries()) {
                assert!((a - b).abs() < 1e-15);
            }
            let f0m = mask_factor(&build_f0(q).unwrap(), MaskSlot::PairSlot1).unwrap();
            let f1m = mask_factor(&build_f1(q).unwrap(), MaskSlot::PairSlot1).unwrap();
            // F1 ↦ −F0 + image(F)
            for i in 0..f1m.entries().len() {
                let want = -f0m.entries()[i] + dm.entries()[i];
                assert!((f1m.entries()[i] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn structure_detected_for_every_role() {
        for q in 2..=6 {
            let table = FactorTable::new(q).unwrap();
            for f in &table.factors {
                assert_ne!(f.structure(), FactorStructure::Dense, "{} q={q}", f.role());
            }
        }
        let e0 = build_e0(5).unwrap();
        assert_eq!(
            e0.structure(),
            FactorStructure::Square {
                all: 0.2,
                diag: 0.0
            }
        );
    }

    #[test]
    fn weight_projector_terms() {
        let terms = expand_weight_projector(2, 1).unwrap();
        assert_eq!(terms.len(), 2);
        let kinds: Vec<Vec<FactorKind>> = terms
            .iter()
            .map(|t| t.slots.iter().map(|s| s.role.kind).collect())
            .collect();
        assert_eq!(
            kinds,
            vec![vec![FactorKind::E1, FactorKind::E0], vec![FactorKind::E0, FactorKind::E1]]
        );
        assert!(expand_weight_projector(2, 3).is_err());

        let p = KroneckerSum::new(2, 3, terms).unwrap().to_dense();
        let tr: f64 = (0..9).map(|i| p.get(i, i)).sum();
        assert!((tr - 4.0).abs() < 1e-12);

        let p0 = KroneckerSum::new(3, 3, expand_weight_projector(3, 0).unwrap()).unwrap();
        assert_eq!(p0.terms().len(), 1);
        let d = p0.to_dense();
        assert_close(&d.matmul(&d), &d, 1e-12);
    }

    #[test]
    fn weight_pattern_counts() {
        let ps = WeightPattern::all_of_weight(5, 2);
        assert_eq!(ps.len(), 10);
        assert!(ps.iter().all(|p| p.weight() == 2));
    }
}
