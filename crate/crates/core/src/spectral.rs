//! Largest singular values of block operators.
//!
//! Two independent routes: a dense oracle (materialize, form the smaller
//! Gram matrix, full symmetric eigendecomposition) and a matrix-free
//! restarted Lanczos iteration on `AᵀA`.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::builder::BlockOperator;
use crate::error::{Error, Result};
use crate::plan::MatvecPlan;
use crate::scheme::{FactorMatrix, SlotCoords};

/// A real linear map given by its action and the action of its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = Aᵀ x`; `y` is overwritten.
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for BlockOperator {
    fn nrows(&self) -> usize {
        BlockOperator::nrows(self)
    }

    fn ncols(&self) -> usize {
        BlockOperator::ncols(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        MatvecPlan::new(self).apply(x, y);
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        MatvecPlan::new(self).apply_transpose(x, y);
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    /// The `q × q` all-ones matrix `J_q`.
    pub fn all_ones(q: usize) -> Self {
        Self::from_vec(q, q, vec![1.0; q * q])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |r, c| self.get(r, c))
    }

    fn from_faer(m: &Mat<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let prod = &self.to_faer() * &other.to_faer();
        Self::from_faer(&prod)
    }

    /// `AᵀA`.
    pub fn gram(&self) -> DenseMatrix {
        let a = self.to_faer();
        Self::from_faer(&(a.transpose() * &a))
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> DenseMatrix {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Eigenvalues of a symmetric matrix, descending.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        assert_eq!(self.rows, self.cols);
        if self.rows == 0 {
            return Ok(Vec::new());
        }
        let mut ev = self
            .to_faer()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Backend(format!("{e:?}")))?;
        ev.reverse();
        Ok(ev)
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *yr = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, xr) in x.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (yc, a) in y.iter_mut().zip(row) {
                *yc += a * xr;
            }
        }
    }
}

/// `A v`, with a length check.
pub fn matvec<A: LinearOperator + ?Sized>(op: &A, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != op.ncols() {
        return Err(Error::DimensionMismatch {
            expected: op.ncols(),
            got: v.len(),
        });
    }
    let mut out = vec![0.0; op.nrows()];
    op.apply(v, &mut out);
    Ok(out)
}

/// `Aᵀ w`, with a length check.
pub fn rmatvec<A: LinearOperator + ?Sized>(op: &A, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != op.nrows() {
        return Err(Error::DimensionMismatch {
            expected: op.nrows(),
            got: w.len(),
        });
    }
    let mut out = vec![0.0; op.ncols()];
    op.apply_transpose(w, &mut out);
    Ok(out)
}

fn guard_dense(rows: usize, cols: usize, limit: usize) -> Result<()> {
    let needed = rows as u128 * cols as u128;
    if needed > limit as u128 {
        return Err(Error::ResourceGuard {
            what: "dense entries",
            needed,
            limit: limit as u128,
        });
    }
    Ok(())
}

/// Dense copy of `op`, every entry evaluated from the factor tables.
pub fn materialize_dense(op: &BlockOperator, limit: usize) -> Result<DenseMatrix> {
    let (rows, cols) = (op.nrows(), op.ncols());
    guard_dense(rows, cols, limit)?;
    let (n, q) = (op.params().n(), op.params().q());
    let mut col_inputs = Vec::with_capacity(cols * n);
    let mut digits = vec![0; n];
    op.for_each_col_full(|_, full| {
        crate::tensor::decode(full, q, &mut digits);
        col_inputs.extend_from_slice(&digits);
    });
    // factor lookups resolved once per term
    let resolved: Vec<Vec<(f64, Vec<(SlotCoords, &FactorMatrix)>)>> = op
        .blocks()
        .iter()
        .map(|b| {
            b.terms
                .iter()
                .map(|t| {
                    let slots = t.slots.iter().map(|s| (s.coords, op.factors().get(s.role))).collect();
                    (t.coefficient, slots)
                })
                .collect()
        })
        .collect();
    let mut out = DenseMatrix::zeros(rows, cols);
    let per = op.rows_per_block();
    for (bi, terms) in resolved.iter().enumerate() {
        op.for_each_row_full(|local, full| {
            let x = op.block_row_input_full(bi, full);
            let r = bi * per + local;
            for c in 0..cols {
                let y = &col_inputs[c * n..(c + 1) * n];
                let v = terms
                    .iter()
                    .map(|(coef, slots)| {
                        slots.iter().fold(*coef, |acc, (coords, f)| {
                            acc * match *coords {
                                SlotCoords::Single(i) => f.entry(x[i], y[i]),
                                SlotCoords::Pair(a, b) => f.entry(x[a], y[a] * q + y[b]),
                            }
                        })
                    })
                    .sum();
                out.set(r, c, v);
            }
        });
    }
    Ok(out)
}

/// Largest singular value of a dense matrix via the eigenvalues of its
/// smaller Gram matrix.
pub fn dense_top_singular_value(a: &DenseMatrix) -> Result<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Ok(0.0);
    }
    let gram = if a.rows <= a.cols {
        a.transpose().gram()
    } else {
        a.gram()
    };
    let top = gram.symmetric_eigenvalues()?[0];
    Ok(top.max(0.0).sqrt())
}

/// All eigenvalues of `AᵀA`, descending and clamped at zero.
pub fn gram_spectrum_dense(op: &BlockOperator, limit: usize) -> Result<Vec<f64>> {
    guard_dense(op.ncols(), op.ncols(), limit)?;
    let a = materialize_dense(op, limit)?;
    Ok(a.gram()
        .symmetric_eigenvalues()?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Dense,
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralResult {
    pub sigma_max: f64,
    /// Gram-operator applications used.
    pub iterations: usize,
    /// `‖AᵀAv − σ²v‖ / σ²` at the returned vector.
    pub residual: f64,
    pub method: Method,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanczosOptions {
    /// Target relative Gram residual.
    pub tol: f64,
    /// Budget of Gram applications.
    pub max_iter: usize,
    /// Krylov basis vectors kept before an explicit restart.
    pub window: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
            window: 20,
            seed: 0x5eed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn start_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..len).map(|_| rng.random::<f64>() - 0.5).collect();
    let nn = norm(&noise);
    let ones = 1.0 / (len as f64).sqrt();
    for v in noise.iter_mut() {
        *v = *v / nn + ones;
    }
    let s = norm(&noise);
    noise.iter_mut().for_each(|v| *v /= s);
    noise
}

/// Largest eigenpair of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`.
fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let top = m - 1;
    Ok((s[top], (0..m).map(|i| u[(i, top)]).collect()))
}

struct Gram<'a, A: ?Sized> {
    op: &'a A,
    tmp: Vec<f64>,
    applies: usize,
}

impl<A: LinearOperator + ?Sized> Gram<'_, A> {
    fn apply(&mut self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.op.ncols()];
        self.op.apply(x, &mut self.tmp);
        self.op.apply_transpose(&self.tmp, &mut out);
        self.applies += 1;
        out
    }
}

/// Largest singular value by restarted Lanczos on `AᵀA` with full
/// reorthogonalization inside each window.
///
/// The start vector mixes the normalized all-ones vector with seeded noise.
/// Convergence is declared on the explicit Gram residual of the restart
/// vector; when the budget runs out the best estimate is returned with
/// `converged = false`.
pub fn top_singular_value<A: LinearOperator + ?Sized>(op: &A, opts: &LanczosOptions) -> Result<SpectralResult> {
    let (rows, cols) = (op.nrows(), op.ncols());
    let zero = SpectralResult {
        sigma_max: 0.0,
        iterations: 0,
        residual: 0.0,
        method: Method::Krylov,
        converged: true,
    };
    if rows == 0 || cols == 0 {
        return Ok(zero);
    }
    let window = opts.window.clamp(2, cols);
    let mut gram = Gram {
        op,
        tmp: vec![0.0; rows],
        applies: 0,
    };
    let mut x = start_vector(cols, opts.seed);
    let mut gx = gram.apply(&x);
    loop {
        let theta_x = dot(&x, &gx);
        if theta_x <= 0.0 {
            // x is annihilated; the start vector has support everywhere, so A = 0
            if norm(&gx) == 0.0 {
                return Ok(SpectralResult {
                    iterations: gram.applies,
                    ..zero
                });
            }
        }
        let mut r = gx.clone();
        axpy(-theta_x, &x, &mut r);
        let residual = if theta_x > 0.0 { norm(&r) / theta_x } else { f64::INFINITY };
        let converged = residual <= opts.tol;
        if converged || gram.applies >= opts.max_iter {
            return Ok(SpectralResult {
                sigma_max: theta_x.max(0.0).sqrt(),
                iterations: gram.applies,
                residual,
                method: Method::Krylov,
                converged,
            });
        }

        // one Lanczos window started from x
        let mut basis = vec![x];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = gx;
        let ritz = loop {
            let j = basis.len() - 1;
            let a = dot(&w, &basis[j]);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(&w, v);
                    axpy(-c, v, &mut w);
                }
            }
            alpha.push(a);
            let b = norm(&w);
            let (theta, s) = tridiagonal_top(&alpha, &beta)?;
            let estimate = if theta > 0.0 { (b * s[j]).abs() / theta } else { f64::INFINITY };
            let stop = estimate <= 0.1 * opts.tol
                || b <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE)
                || basis.len() >= window
                || gram.applies + 1 >= opts.max_iter;
            if stop {
                break s;
            }
            beta.push(b);
            w.iter_mut().for_each(|v| *v /= b);
            let next = gram.apply(&w);
            basis.push(std::mem::replace(&mut w, next));
        };
        let mut nx = vec![0.0; cols];
        for (v, &c) in basis.iter().zip(&ritz) {
            axpy(c, v, &mut nx);
        }
        let s = norm(&nx);
        nx.iter_mut().for_each(|v| *v /= s);
        drop(basis);
        gx = gram.apply(&nx);
        x = nx;
    }
}

/// Largest singular value by the dense oracle, guarded by `limit` entries.
pub fn top_singular_value_dense(op: &BlockOperator, limit: usize) -> Result<SpectralResult> {
    let a = materialize_dense(op, limit)?;
    Ok(SpectralResult {
        sigma_max: dense_top_singular_value(&a)?,
        iterations: 0,
        residual: 0.0,
        method: Method::Dense,
        converged: true,
    })
}
