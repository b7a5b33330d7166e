//! Matrix-free application of a [`BlockOperator`].
//!
//! Every block is handled pair factor first: the `q × q²` factor contracts
//! the two collision coordinates of the column tensor into one row symbol
//! (for structured factors, through axis sums and broadcasts),
//! after which the square factors act mode by mode on the `qⁿ⁻¹`-sized
//! result. Terms of a block that share a pair factor share the contraction.

use crate::builder::{BlockOperator, CollisionPair};
use crate::scheme::{FactorMatrix, FactorStructure, SlotCoords};
use crate::spectral::LinearOperator;
use crate::tensor::{
    apply_square_mode, axis_to_front_add, broadcast_add, for_each_diagonal, front_to_axis_add, sum_axis, walk_pair,
};

struct TermPlan<'a> {
    coefficient: f64,
    /// (axis in the `(c, rest…)` row layout, factor)
    modes: Vec<(usize, &'a FactorMatrix)>,
}

struct PairGroup<'a> {
    factor: &'a FactorMatrix,
    terms: Vec<TermPlan<'a>>,
}

struct BlockPlan<'a> {
    pair: CollisionPair,
    groups: Vec<PairGroup<'a>>,
}

/// Precomputed application schedule for one operator.
pub struct MatvecPlan<'a> {
    op: &'a BlockOperator,
    n: usize,
    q: usize,
    blocks: Vec<BlockPlan<'a>>,
}

impl<'a> MatvecPlan<'a> {
    pub fn new(op: &'a BlockOperator) -> Self {
        let (n, q) = (op.params().n(), op.params().q());
        let factors = op.factors();
        let blocks = op
            .blocks()
            .iter()
            .map(|block| {
                let rest = block.pair.rest(n);
                let mut groups: Vec<PairGroup<'a>> = Vec::new();
                for t in &block.terms {
                    let mut pair_factor = None;
                    let mut modes = Vec::new();
                    for s in &t.slots {
                        match s.coords {
                            SlotCoords::Pair(..) => pair_factor = Some(factors.get(s.role)),
                            SlotCoords::Single(c) => {
                                let pos = rest.iter().position(|&r| r == c).expect("coordinate outside the pair");
                                modes.push((1 + pos, factors.get(s.role)));
                            }
                        }
                    }
                    modes.sort_by_key(|m| m.0);
                    let factor = pair_factor.expect("block term without a pair factor");
                    let term = TermPlan {
                        coefficient: t.coefficient,
                        modes,
                    };
                    match groups.iter_mut().find(|g| g.factor.role() == factor.role()) {
                        Some(g) => g.terms.push(term),
                        None => groups.push(PairGroup {
                            factor,
                            terms: vec![term],
                        }),
                    }
                }
                BlockPlan {
                    pair: block.pair,
                    groups,
                }
            })
            .collect();
        Self { op, n, q, blocks }
    }

    fn block_len(&self) -> usize {
        self.q.pow(self.n as u32 - 1)
    }

    fn rest_len(&self) -> usize {
        self.q.pow(self.n as u32 - 2)
    }

    fn full_cols(&self) -> usize {
        self.q.pow(self.n as u32)
    }

    /// Largest scratch vector the plan allocates, in `f64`s.
    pub fn workspace_len(&self) -> usize {
        self.full_cols() + 3 * self.block_len()
    }

    /// `u[c·Q + r] = Σ_{y_a,y_b} P[c, (y_a,y_b)] v[y]`, `Q = q^{n−2}`.
    fn contract_pair(&self, factor: &FactorMatrix, pair: CollisionPair, v: &[f64], u: &mut [f64]) {
        let (n, q) = (self.n, self.q);
        let rest_len = self.rest_len();
        match factor.structure() {
            FactorStructure::Pair {
                all,
                slot1,
                slot2,
                both,
            } => {
                let (a, b) = (pair.a(), pair.b());
                u.iter_mut().for_each(|x| *x = 0.0);
                // rows[.., y_a, ..] sums out y_b; cols[.., y_b, ..] sums out y_a
                let rows = sum_axis(v, q, n, b);
                if slot1 != 0.0 {
                    axis_to_front_add(&rows, q, n - 1, a, slot1, u);
                }
                if slot2 != 0.0 {
                    let cols = sum_axis(v, q, n, a);
                    axis_to_front_add(&cols, q, n - 1, b - 1, slot2, u);
                }
                if all != 0.0 {
                    let tot = sum_axis(&rows, q, n - 1, a);
                    for plane in u.chunks_exact_mut(rest_len) {
                        plane.iter_mut().zip(&tot).for_each(|(x, t)| *x += all * t);
                    }
                }
                if both != 0.0 {
                    for_each_diagonal(n, q, a, b, |idx, c, r| u[c * rest_len + r] += both * v[idx]);
                }
            }
            _ => {
                let qq = q * q;
                let mut slices = vec![0.0; rest_len * qq];
                walk_pair(n, q, pair.a(), pair.b(), |idx, ya, yb, r| {
                    slices[r * qq + ya * q + yb] = v[idx];
                });
                for c in 0..q {
                    let row = &factor.entries()[c * qq..(c + 1) * qq];
                    for r in 0..rest_len {
                        let s = &slices[r * qq..(r + 1) * qq];
                        u[c * rest_len + r] = row.iter().zip(s).map(|(m, x)| m * x).sum();
                    }
                }
            }
        }
    }

    /// `acc[y] += Σ_c P[c, (y_a,y_b)] u[c·Q + r]`.
    fn expand_pair(&self, factor: &FactorMatrix, pair: CollisionPair, u: &[f64], acc: &mut [f64]) {
        let (n, q) = (self.n, self.q);
        let rest_len = self.rest_len();
        match factor.structure() {
            FactorStructure::Pair {
                all,
                slot1,
                slot2,
                both,
            } => {
                let (a, b) = (pair.a(), pair.b());
                let block_len = rest_len * q;
                // terms constant along y_b: slot1 and the all-entries part
                let mut t = vec![0.0; block_len];
                if slot1 != 0.0 {
                    front_to_axis_add(u, q, n - 1, a, slot1, &mut t);
                }
                if all != 0.0 {
                    let mut sums = vec![0.0; rest_len];
                    for plane in u.chunks_exact(rest_len) {
                        sums.iter_mut().zip(plane).for_each(|(s, x)| *s += all * x);
                    }
                    broadcast_add(&sums, q, n - 1, a, &mut t);
                }
                broadcast_add(&t, q, n, b, acc);
                if slot2 != 0.0 {
                    t.iter_mut().for_each(|x| *x = 0.0);
                    front_to_axis_add(u, q, n - 1, b - 1, slot2, &mut t);
                    broadcast_add(&t, q, n, a, acc);
                }
                if both != 0.0 {
                    for_each_diagonal(n, q, a, b, |idx, c, r| acc[idx] += both * u[c * rest_len + r]);
                }
            }
            _ => {
                let qq = q * q;
                let mut slices = vec![0.0; rest_len * qq];
                for c in 0..q {
                    let row = &factor.entries()[c * qq..(c + 1) * qq];
                    for r in 0..rest_len {
                        let w = u[c * rest_len + r];
                        if w == 0.0 {
                            continue;
                        }
                        for (s, m) in slices[r * qq..(r + 1) * qq].iter_mut().zip(row) {
                            *s += m * w;
                        }
                    }
                }
                walk_pair(n, q, pair.a(), pair.b(), |idx, ya, yb, r| {
                    acc[idx] += slices[r * qq + ya * q + yb];
                });
            }
        }
    }

    /// `out += coefficient · (⊗ modes) src`, using `buf` as scratch.
    fn accumulate_term(&self, term: &TermPlan<'_>, src: &[f64], out: &mut [f64], bufs: &mut [Vec<f64>; 2], transpose: bool) {
        let modes = self.n - 1;
        if term.modes.is_empty() {
            for (o, s) in out.iter_mut().zip(src) {
                *o += term.coefficient * s;
            }
            return;
        }
        let [a, b] = bufs;
        let (mut cur, mut next) = (a, b);
        apply_square_mode(src, cur, self.q, modes, term.modes[0].0, term.modes[0].1, transpose);
        for &(mode, f) in &term.modes[1..] {
            apply_square_mode(cur, next, self.q, modes, mode, f, transpose);
            std::mem::swap(&mut cur, &mut next);
        }
        for (o, s) in out.iter_mut().zip(cur.iter()) {
            *o += term.coefficient * s;
        }
    }

    fn block_forward(&self, bp: &BlockPlan<'_>, v: &[f64], out: &mut [f64]) {
        let len = self.block_len();
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut u = vec![0.0; len];
        let mut bufs = [vec![0.0; len], vec![0.0; len]];
        for g in &bp.groups {
            self.contract_pair(g.factor, bp.pair, v, &mut u);
            for t in &g.terms {
                self.accumulate_term(t, &u, out, &mut bufs, false);
            }
        }
    }

    fn block_transpose(&self, bp: &BlockPlan<'_>, w: &[f64], acc: &mut [f64]) {
        let len = self.block_len();
        let mut u = vec![0.0; len];
        let mut bufs = [vec![0.0; len], vec![0.0; len]];
        for g in &bp.groups {
            u.iter_mut().for_each(|x| *x = 0.0);
            for t in &g.terms {
                self.accumulate_term(t, w, &mut u, &mut bufs, true);
            }
            self.expand_pair(g.factor, bp.pair, &u, acc);
        }
    }
}

impl LinearOperator for MatvecPlan<'_> {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }

    fn ncols(&self) -> usize {
        self.op.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let embedded;
        let v: &[f64] = match self.op.col_selection() {
            Some(sel) => {
                let mut full = vec![0.0; self.full_cols()];
                sel.embed(x, &mut full);
                embedded = full;
                &embedded
            }
            None => x,
        };
        let per = self.op.rows_per_block();
        let mut blk = vec![0.0; self.block_len()];
        for (bi, bp) in self.blocks.iter().enumerate() {
            let dst = &mut y[bi * per..(bi + 1) * per];
            match self.op.row_selection() {
                Some(sel) => {
                    self.block_forward(bp, v, &mut blk);
                    sel.select(&blk, dst);
                }
                None => self.block_forward(bp, v, dst),
            }
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let per = self.op.rows_per_block();
        let mut acc = match self.op.col_selection() {
            Some(_) => vec![0.0; self.full_cols()],
            None => {
                y.iter_mut().for_each(|v| *v = 0.0);
                Vec::new()
            }
        };
        let mut blk = vec![0.0; self.block_len()];
        for (bi, bp) in self.blocks.iter().enumerate() {
            let src = &x[bi * per..(bi + 1) * per];
            let w: &[f64] = match self.op.row_selection() {
                Some(sel) => {
                    sel.embed(src, &mut blk);
                    &blk
                }
                None => src,
            };
            match self.op.col_selection() {
                Some(_) => self.block_transpose(bp, w, &mut acc),
                None => self.block_transpose(bp, w, y),
            }
        }
        if let Some(sel) = self.op.col_selection() {
            sel.select(&acc, y);
        }
    }
}
