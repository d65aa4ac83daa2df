//! Small complex linear-algebra helpers shared by the solver modules.
//!
//! All factorizations route through this module so that each solve can record
//! the dimensions it factored; the per-solve counter of "large" factorizations
//! in [`crate::types::SolveTrace`] is produced from that log.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

thread_local! {
    static FACTOR_DIMS: RefCell<Option<Vec<usize>>> = const { RefCell::new(None) };
}

/// Start recording factorization dimensions on this thread.
/// Any previous recording is discarded.
pub(crate) fn dimlog_start() {
    FACTOR_DIMS.with(|l| *l.borrow_mut() = Some(Vec::new()));
}

/// Stop recording and return the logged dimensions.
pub(crate) fn dimlog_take() -> Vec<usize> {
    FACTOR_DIMS.with(|l| l.borrow_mut().take().unwrap_or_default())
}

fn dimlog_push(dim: usize) {
    FACTOR_DIMS.with(|l| {
        if let Some(v) = l.borrow_mut().as_mut() {
            v.push(dim);
        }
    });
}

/// Force a matrix to be exactly Hermitian: `m <- (m + m^H) / 2`.
pub(crate) fn hermitianize(m: &mut CMat) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)].conj());
            m[(r, c)] = avg;
            m[(c, r)] = avg.conj();
        }
        m[(r, r)] = Complex64::new(m[(r, r)].re, 0.0);
    }
}

/// Horizontal concatenation. Blocks with zero columns are allowed.
pub(crate) fn hstack(blocks: &[&CMat]) -> CMat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation.
pub(crate) fn vstack(blocks: &[&CMat]) -> CMat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Squared Frobenius norm.
pub fn frob2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Solve `A X = B` for Hermitian positive definite `A` via Cholesky.
pub(crate) fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    dimlog_push(a.nrows());
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("{}x{} system is not positive definite", a.nrows(), a.ncols())))?;
    Ok(chol.solve(b))
}

/// Cholesky factor of a Hermitian positive definite matrix, if one exists.
pub(crate) fn try_cholesky(a: &CMat) -> Option<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    dimlog_push(a.nrows());
    a.clone().cholesky()
}

/// Natural-log determinant of a Hermitian positive definite matrix.
pub(crate) fn logdet_hpd(a: &CMat) -> Result<f64> {
    dimlog_push(a.nrows());
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("log-det of a non positive definite {}x{} matrix", a.nrows(), a.ncols())))?;
    let l = chol.l();
    Ok(2.0 * (0..a.nrows()).map(|j| l[(j, j)].re.ln()).sum::<f64>())
}

/// Solve `A X = B` for general square `A` via LU with partial pivoting.
pub(crate) fn solve_general(a: &CMat, b: &CMat) -> Result<CMat> {
    dimlog_push(a.nrows());
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numeric(format!("singular {}x{} system", a.nrows(), a.ncols())))
}

/// Inverse of a general square matrix.
pub(crate) fn inv_general(a: &CMat) -> Result<CMat> {
    dimlog_push(a.nrows());
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric(format!("singular {}x{} matrix", a.nrows(), a.ncols())))
}

/// Eigendecomposition of a Hermitian matrix: `A = Q diag(vals) Q^H`.
pub(crate) struct HermEig {
    pub vals: Vec<f64>,
    pub vecs: CMat,
}

pub(crate) fn herm_eig(a: &CMat) -> HermEig {
    dimlog_push(a.nrows());
    let eig = a.clone().symmetric_eigen();
    HermEig {
        vals: eig.eigenvalues.iter().copied().collect(),
        vecs: eig.eigenvectors,
    }
}

/// Thin SVD with singular values in descending order.
pub(crate) struct ThinSvd {
    pub u: CMat,
    pub singular: Vec<f64>,
    /// `V^H`, one row per singular value.
    pub v_h: CMat,
}

pub(crate) fn thin_svd(a: &CMat) -> Result<ThinSvd> {
    dimlog_push(a.nrows().min(a.ncols()));
    let svd = a.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD did not return U".into()))?;
    let v_h = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return V^H".into()))?;
    Ok(ThinSvd {
        u,
        singular: svd.singular_values.iter().copied().collect(),
        v_h,
    })
}

/// Relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Relative Frobenius difference between same-shaped matrices.
pub fn frob_rel_diff(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    diff / a.norm().max(b.norm()).max(1e-300)
}
