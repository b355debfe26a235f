//! Dense factorizations and solvers used by HOSVD and the ALS sweeps.
//!
//! Least-squares problems go through an SVD-based pseudo-inverse, which gives
//! the minimum-norm solution whenever the design is rank deficient.

use faer::{Mat, Side};
use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::tensor::{max_asymmetry, Matrix};

/// Leading singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// `u · diag(s) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.vt
    }
}

/// Solution of a linear least-squares problem.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: Matrix,
    /// Numerical rank of the design matrix.
    pub rank: usize,
    /// Set when the design did not have full rank and the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
}

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD, singular values non-increasing.
fn thin_svd(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::NonFinite("svd did not converge"))?;
    let (u, v) = (svd.U(), svd.V());
    let k = u.ncols();
    let s = (0..k).map(|i| svd.S().column_vector()[i]).collect();
    let u = Matrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]);
    let vt = Matrix::from_fn(k, m.ncols(), |i, j| v[(j, i)]);
    Ok((u, s, vt))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-decreasing.
pub fn symmetric_eigen(m: &Matrix) -> Result<(DVector<f64>, Matrix)> {
    check_finite(m, "eigen input")?;
    let eig = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NonFinite("eigensolver did not converge"))?;
    let n = m.nrows();
    let values = DVector::from_fn(n, |i, _| eig.S().column_vector()[i]);
    let vectors = Matrix::from_fn(n, n, |i, j| eig.U()[(i, j)]);
    Ok((values, vectors))
}

fn check_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Leading `rank` singular triplets, singular values non-increasing.
///
/// Each left singular vector is signed so that its largest-magnitude entry is
/// non-negative; the matching row of `vt` is flipped with it.
pub fn truncated_svd(m: &Matrix, rank: usize) -> Result<SvdResult> {
    let max = m.nrows().min(m.ncols());
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { mode: 0, rank, max });
    }
    check_finite(m, "svd input")?;
    full_svd(m, rank, true)
}

/// Left singular vectors only; skips forming `vt`.
pub(crate) fn leading_left_singular_vectors(m: &Matrix, rank: usize) -> Result<Matrix> {
    let max = m.nrows().min(m.ncols());
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { mode: 0, rank, max });
    }
    check_finite(m, "svd input")?;
    Ok(full_svd(m, rank, false)?.u)
}

fn full_svd(m: &Matrix, rank: usize, want_v: bool) -> Result<SvdResult> {
    let (u_full, s_full, vt_full) = thin_svd(m)?;
    let mut u = Matrix::zeros(m.nrows(), rank);
    let mut vt = Matrix::zeros(if want_v { rank } else { 0 }, m.ncols());
    for j in 0..rank {
        let col = u_full.column(j);
        let pivot = col.iter().fold(
            0.0f64,
            |best, &v| {
                if v.abs() > best.abs() {
                    v
                } else {
                    best
                }
            },
        );
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u.set_column(j, &(col * sign));
        if want_v {
            vt.set_row(j, &(vt_full.row(j) * sign));
        }
    }
    Ok(SvdResult {
        u,
        s: s_full[..rank].to_vec(),
        vt,
    })
}

/// Solves `l · x = rhs` for symmetric positive definite `l`.
///
/// A Cholesky factorization is attempted first. If it fails, diagonal jitter
/// `ε·trace(l)/n` is added with `ε` stepping through 1e-12, 1e-10 and 1e-8.
pub fn solve_spd(l: &Matrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if !l.is_square() || l.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch(format!(
            "system matrix {}x{} with right-hand side of length {}",
            l.nrows(),
            l.ncols(),
            rhs.len()
        )));
    }
    check_finite(l, "spd system matrix")?;
    if !rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("spd right-hand side"));
    }
    let asym = max_asymmetry(l);
    if asym > 1e-8 * l.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    if let Some(ch) = Cholesky::new(l.clone()) {
        return Ok(ch.solve(rhs));
    }
    let n = l.nrows();
    let mean_diag = l.trace() / n as f64;
    for eps in [1e-12, 1e-10, 1e-8] {
        let mut jittered = l.clone();
        for i in 0..n {
            jittered[(i, i)] += eps * mean_diag;
        }
        if let Some(ch) = Cholesky::new(jittered) {
            log::warn!("spd solve needed diagonal jitter {eps:e}");
            return Ok(ch.solve(rhs));
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Minimum-norm least-squares solution of `design · x = rhs` via SVD.
///
/// At most `max_rank` singular directions are kept (the largest ones).
fn lstsq(design: &Matrix, rhs: &Matrix, max_rank: usize) -> Result<LeastSquares> {
    check_finite(design, "least-squares design")?;
    check_finite(rhs, "least-squares right-hand side")?;
    let (rows, cols) = design.shape();
    // tall designs: thin QR first, then the SVD of the small triangular factor
    let ((u, sv, vt), projected) = if rows > 2 * cols {
        let qr = design.clone().qr();
        let mut qt_rhs = rhs.clone();
        qr.q_tr_mul(&mut qt_rhs);
        let qt_rhs = qt_rhs.rows(0, cols).into_owned();
        (thin_svd(&qr.r())?, qt_rhs)
    } else {
        (thin_svd(design)?, rhs.clone())
    };
    let smax = sv.first().copied().unwrap_or(0.0);
    let mut tol = rows.max(cols) as f64 * f64::EPSILON * smax;
    if max_rank < sv.len() {
        tol = tol.max(sv[max_rank]);
    }
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let mut coeffs = u.transpose() * projected;
    for (i, s) in sv.iter().enumerate() {
        let inv = if *s > tol { 1.0 / s } else { 0.0 };
        coeffs.row_mut(i).scale_mut(inv);
    }
    let solution = vt.transpose() * coeffs;
    let rank_deficient = rank < cols;
    if rank_deficient {
        log::debug!("least-squares design {rows}x{cols} has rank {rank}");
    }
    Ok(LeastSquares {
        solution,
        rank,
        rank_deficient,
    })
}

/// Minimizes `‖t − a·m‖_F` over `a`.
pub fn solve_right(t: &Matrix, m: &Matrix) -> Result<LeastSquares> {
    solve_right_capped(t, m, usize::MAX)
}

/// [`solve_right`] for a design known to have rank at most `max_rank`.
pub fn solve_right_capped(t: &Matrix, m: &Matrix, max_rank: usize) -> Result<LeastSquares> {
    if m.ncols() != t.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} columns, design has {}",
            t.ncols(),
            m.ncols()
        )));
    }
    let mut ls = lstsq(&m.transpose(), &t.transpose(), max_rank)?;
    ls.solution = ls.solution.transpose();
    Ok(ls)
}

/// Minimizes `‖c·g − y‖_F` over `g`.
pub fn solve_left(c: &Matrix, y: &Matrix) -> Result<LeastSquares> {
    solve_left_capped(c, y, usize::MAX)
}

/// [`solve_left`] for a design known to have rank at most `max_rank`.
pub fn solve_left_capped(c: &Matrix, y: &Matrix, max_rank: usize) -> Result<LeastSquares> {
    if c.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, target has {}",
            c.nrows(),
            y.nrows()
        )));
    }
    let ls = lstsq(c, y, max_rank)?;
    if ls.rank < c.ncols().min(max_rank) {
        log::warn!(
            "core solve design is column-rank deficient (rank {} < {})",
            ls.rank,
            c.ncols()
        );
    }
    Ok(ls)
}

/// Orthonormal basis for the column space of `m` (thin QR, `m` tall).
pub(crate) fn orthonormalize(m: &Matrix) -> Matrix {
    m.clone().qr().q()
}
