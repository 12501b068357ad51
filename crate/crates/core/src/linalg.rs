//! Dense symmetric positive-definite algebra.
//!
//! Every estimator in the crate reduces to solves against `K + shift * I`
//! with `K` a kernel (or feature) Gram matrix. Those solves go through a
//! Cholesky factorization with a small jitter ladder: Gram matrices with
//! duplicated points are singular in exact arithmetic and only barely
//! positive definite after rounding.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{KivError, Result};

/// Row-major logical dense matrix. Rows are observations wherever a matrix
/// holds a point set.
pub type DenseMatrix = Mat<f64>;

/// Relative jitter levels tried, in order, when `K + shift * I` fails to
/// factorize. Each level is scaled by the mean diagonal of the shifted matrix.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Relative tolerance for the symmetry precondition.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// How a symmetric solve went.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SpdSolveReport {
    /// Absolute diagonal jitter added on top of the requested shift. Zero
    /// when the unmodified system factorized.
    pub jitter_applied: f64,
    /// Squared ratio of the largest to smallest Cholesky pivot, a cheap
    /// lower bound on the 2-norm condition number.
    pub condition_hint: Option<f64>,
}

impl SpdSolveReport {
    pub fn jittered(&self) -> bool {
        self.jitter_applied > 0.0
    }

    /// Merges two reports, keeping the worst of each field.
    pub fn worst(self, other: SpdSolveReport) -> SpdSolveReport {
        let condition_hint = match (self.condition_hint, other.condition_hint) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        SpdSolveReport {
            jitter_applied: self.jitter_applied.max(other.jitter_applied),
            condition_hint,
        }
    }
}

/// Builds a matrix from row-major data, enforcing shape and finiteness.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(KivError::EmptyInput("matrix with zero rows or columns"));
    }
    if data.len() != rows * cols {
        return Err(KivError::dims("from_row_major", rows * cols, data.len()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(KivError::NonFinite("matrix entries"));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| data[i * cols + j]))
}

/// A single column built from a slice.
pub fn column(values: &[f64]) -> DenseMatrix {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

pub fn ensure_finite(m: MatRef<'_, f64>, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(KivError::NonFinite(what));
            }
        }
    }
    Ok(())
}

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

pub fn is_symmetric(k: MatRef<'_, f64>, rel_tol: f64) -> bool {
    if k.nrows() != k.ncols() {
        return false;
    }
    let tol = rel_tol * max_abs(k).max(f64::MIN_POSITIVE);
    for j in 0..k.ncols() {
        for i in (j + 1)..k.nrows() {
            if (k[(i, j)] - k[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// `(K + K^T) / 2`, plus `shift` on the diagonal.
fn symmetrized_shifted(k: MatRef<'_, f64>, shift: f64) -> DenseMatrix {
    let n = k.nrows();
    Mat::from_fn(n, n, |i, j| {
        let v = 0.5 * (k[(i, j)] + k[(j, i)]);
        if i == j {
            v + shift
        } else {
            v
        }
    })
}

fn check_square_symmetric(k: MatRef<'_, f64>, context: &'static str) -> Result<()> {
    if k.nrows() == 0 {
        return Err(KivError::EmptyInput(context));
    }
    if k.nrows() != k.ncols() {
        return Err(KivError::dims(
            context,
            "square matrix",
            format!("{}x{}", k.nrows(), k.ncols()),
        ));
    }
    ensure_finite(k, context)?;
    if !is_symmetric(k, SYMMETRY_TOL) {
        return Err(KivError::InvalidSpec(format!(
            "{context}: matrix is not symmetric"
        )));
    }
    Ok(())
}

/// Cholesky factor of a symmetrized, shifted, possibly jittered matrix.
pub struct SpdFactor {
    llt: Llt<f64>,
    dim: usize,
    report: SpdSolveReport,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor")
            .field("dim", &self.dim)
            .field("report", &self.report)
            .finish()
    }
}

impl SpdFactor {
    /// Factorizes `(K + K^T)/2 + shift * I`, walking the jitter ladder on
    /// failure. `shift` may be zero here; callers that need strict
    /// regularization use [`regularized_solve`].
    pub fn new(k: MatRef<'_, f64>, shift: f64) -> Result<Self> {
        check_square_symmetric(k, "SpdFactor::new")?;
        if !shift.is_finite() || shift < 0.0 {
            return Err(KivError::InvalidSpec(format!(
                "shift must be finite and nonnegative, got {shift}"
            )));
        }
        let mut a = symmetrized_shifted(k, shift);
        let n = a.nrows();
        if let Ok(llt) = a.llt(Side::Lower) {
            let report = SpdSolveReport {
                jitter_applied: 0.0,
                condition_hint: pivot_condition(&llt),
            };
            return Ok(SpdFactor { llt, dim: n, report });
        }

        let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64;
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut applied = 0.0;
        let mut last = 0.0;
        for rel in JITTER_LADDER {
            let target = rel * scale;
            for i in 0..n {
                a[(i, i)] += target - applied;
            }
            applied = target;
            last = target;
            if let Ok(llt) = a.llt(Side::Lower) {
                let report = SpdSolveReport {
                    jitter_applied: applied,
                    condition_hint: pivot_condition(&llt),
                };
                return Ok(SpdFactor { llt, dim: n, report });
            }
        }
        Err(KivError::FactorizationFailure { max_jitter: last })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn report(&self) -> SpdSolveReport {
        self.report
    }

    pub fn solve(&self, b: MatRef<'_, f64>) -> Result<DenseMatrix> {
        if b.nrows() != self.dim {
            return Err(KivError::dims("SpdFactor::solve", self.dim, b.nrows()));
        }
        ensure_finite(b, "right-hand side")?;
        Ok(self.llt.solve(b))
    }
}

fn pivot_condition(llt: &Llt<f64>) -> Option<f64> {
    let l = llt.L();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo > 0.0 && lo.is_finite() {
        Some((hi / lo).powi(2))
    } else {
        None
    }
}

/// Solves `(K + shift * I) S = B` for symmetric `K` and `shift > 0`.
pub fn regularized_solve(
    k: MatRef<'_, f64>,
    shift: f64,
    b: MatRef<'_, f64>,
) -> Result<(DenseMatrix, SpdSolveReport)> {
    if !(shift > 0.0) || !shift.is_finite() {
        return Err(KivError::InvalidSpec(format!(
            "regularization shift must be finite and > 0, got {shift}"
        )));
    }
    if b.nrows() != k.nrows() {
        return Err(KivError::dims("regularized_solve", k.nrows(), b.nrows()));
    }
    ensure_finite(b, "regularized_solve right-hand side")?;
    let factor = SpdFactor::new(k, shift)?;
    let s = factor.solve(b)?;
    Ok((s, factor.report()))
}

/// Solves `A S = B` for symmetric positive semi-definite `A` with the jitter
/// ladder as the only regularization.
pub fn spd_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<(DenseMatrix, SpdSolveReport)> {
    if b.nrows() != a.nrows() {
        return Err(KivError::dims("spd_solve", a.nrows(), b.nrows()));
    }
    let factor = SpdFactor::new(a, 0.0)?;
    let s = factor.solve(b)?;
    Ok((s, factor.report()))
}

pub fn trace(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(KivError::dims(
            "trace",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok((0..a.nrows()).map(|i| a[(i, i)]).sum())
}

/// `tr(A^T B)`, accumulated entrywise without forming the product.
pub fn trace_of_product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(KivError::dims(
            "trace_of_product",
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    Ok(acc)
}

/// `tr[A - 2 B G + G^T C G]` for `A: m x m`, `B: m x n`, `G: n x m`,
/// `C: n x n`.
///
/// Only the `C G` product is materialized; the other two terms are
/// diagonal-only accumulations.
pub fn quadratic_trace(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    g: MatRef<'_, f64>,
    c: MatRef<'_, f64>,
) -> Result<f64> {
    let m = a.nrows();
    let n = c.nrows();
    if a.ncols() != m || c.ncols() != n {
        return Err(KivError::dims("quadratic_trace", "square A and C", "non-square"));
    }
    if b.nrows() != m || b.ncols() != n || g.nrows() != n || g.ncols() != m {
        return Err(KivError::dims(
            "quadratic_trace",
            format!("B {m}x{n}, G {n}x{m}"),
            format!(
                "B {}x{}, G {}x{}",
                b.nrows(),
                b.ncols(),
                g.nrows(),
                g.ncols()
            ),
        ));
    }
    let cross = trace_of_product(b.transpose(), g)?;
    let cg = c * g;
    let quad = trace_of_product(g, cg.as_ref())?;
    Ok(trace(a)? - 2.0 * cross + quad)
}

/// Eigendecomposition `K = U diag(values) U^T` of a symmetrized matrix,
/// with eigenvalues clamped at zero. Used where the same matrix is solved
/// against many shifts.
#[derive(Clone, Debug)]
pub struct SymmetricSpectrum {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricSpectrum {
    pub fn new(k: MatRef<'_, f64>) -> Result<Self> {
        check_square_symmetric(k, "SymmetricSpectrum::new")?;
        let sym = symmetrized_shifted(k, 0.0);
        let evd = sym
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| KivError::FactorizationFailure { max_jitter: 0.0 })?;
        let s = evd.S().column_vector();
        let values = (0..sym.nrows()).map(|i| s[i].max(0.0)).collect();
        Ok(SymmetricSpectrum {
            values,
            vectors: evd.U().to_owned(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U^T B`.
    pub fn project(&self, b: MatRef<'_, f64>) -> DenseMatrix {
        self.vectors.transpose() * b
    }

    /// `(K + shift * I)^{-1} B` through the spectrum.
    pub fn shifted_solve(&self, shift: f64, b: MatRef<'_, f64>) -> DenseMatrix {
        let mut p = self.project(b);
        self.scale_rows(&mut p, shift);
        &self.vectors * &p
    }

    /// Multiplies row `i` of `p` by `1 / (values[i] + shift)`.
    pub fn scale_rows(&self, p: &mut DenseMatrix, shift: f64) {
        for (i, v) in self.values.iter().enumerate() {
            let d = 1.0 / (v + shift);
            for j in 0..p.ncols() {
                p[(i, j)] *= d;
            }
        }
    }
}
