//! Truncated HOSVD and Tucker reconstruction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::leading_left_singular_vectors;
use crate::tensor::{kronecker, mode_product, norm, unfold, DenseTensor, Matrix};

/// Core tensor plus one orthonormal-column factor per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
}

impl TuckerFactors {
    pub fn validate(&self) -> Result<()> {
        if self.factors.len() != self.core.order() {
            return Err(Error::DimensionMismatch(format!(
                "{} factors for order-{} core",
                self.factors.len(),
                self.core.order()
            )));
        }
        for (k, (f, r)) in self.factors.iter().zip(self.core.shape()).enumerate() {
            if f.ncols() != *r {
                return Err(Error::DimensionMismatch(format!(
                    "factor {k} has {} columns, core extent is {r}",
                    f.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }
}

fn check_ranks(shape: &[usize], ranks: &[usize]) -> Result<Vec<usize>> {
    if ranks.len() != shape.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for order-{} tensor",
            ranks.len(),
            shape.len()
        )));
    }
    shape
        .iter()
        .zip(ranks)
        .enumerate()
        .map(|(mode, (&extent, &rank))| {
            if extent == 1 {
                // degenerate modes carry rank 1 regardless of the request
                Ok(1)
            } else if rank == 0 || rank > extent {
                Err(Error::RankOutOfRange {
                    mode,
                    rank,
                    max: extent,
                })
            } else {
                Ok(rank)
            }
        })
        .collect()
}

/// Truncated higher-order SVD.
///
/// Factor `k` holds the leading `ranks[k]` left singular vectors of the
/// mode-`k` unfolding; the core is `t ×₀ A₀ᵀ ×₁ A₁ᵀ …`.
pub fn hosvd(t: &DenseTensor, ranks: &[usize]) -> Result<TuckerFactors> {
    let ranks = check_ranks(t.shape(), ranks)?;
    if !t.is_finite() {
        return Err(Error::NonFinite("hosvd input"));
    }
    let factors = ranks
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let unf = unfold(t, k)?;
            if unf.nrows() <= unf.ncols() {
                leading_left_singular_vectors(&unf, r)
            } else {
                // tall unfolding: rank is still bounded by the column count
                let r_eff = r.min(unf.ncols());
                let mut u = leading_left_singular_vectors(&unf, r_eff)?;
                if r_eff < r {
                    u = complete_basis(&u, r);
                }
                Ok(u)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut core = t.clone();
    for (k, f) in factors.iter().enumerate() {
        core = mode_product(&core, &f.transpose(), k)?;
    }
    Ok(TuckerFactors { core, factors })
}

/// Extends orthonormal columns `u` to `cols` orthonormal columns.
fn complete_basis(u: &Matrix, cols: usize) -> Matrix {
    let n = u.nrows();
    let mut out = Matrix::zeros(n, cols);
    out.columns_mut(0, u.ncols()).copy_from(u);
    let mut filled = u.ncols();
    for e in 0..n {
        if filled == cols {
            break;
        }
        let mut v = nalgebra::DVector::<f64>::zeros(n);
        v[e] = 1.0;
        for j in 0..filled {
            let c = out.column(j);
            let d = c.dot(&v);
            v -= c * d;
        }
        let nv = v.norm();
        if nv > 1e-8 {
            out.set_column(filled, &(v / nv));
            filled += 1;
        }
    }
    out
}

/// `core ×₀ A₀ ×₁ A₁ …` via sequential mode products.
pub fn reconstruct(f: &TuckerFactors) -> Result<DenseTensor> {
    f.validate()?;
    let mut out = f.core.clone();
    for (k, a) in f.factors.iter().enumerate() {
        out = mode_product(&out, a, k)?;
    }
    Ok(out)
}

/// Mode-`k` unfolding of the reconstruction built from the Kronecker form
/// `A_k · G_(k) · (A_{N−1} ⊗ … ⊗ A_{k+1} ⊗ A_{k−1} ⊗ … ⊗ A_0)ᵀ`.
pub fn unfolding_via_kronecker(f: &TuckerFactors, mode: usize) -> Result<Matrix> {
    f.validate()?;
    let g = unfold(&f.core, mode)?;
    let mut kron: Option<Matrix> = None;
    for (j, a) in f.factors.iter().enumerate().rev() {
        if j == mode {
            continue;
        }
        kron = Some(match kron {
            None => a.clone(),
            Some(acc) => kronecker(&acc, a),
        });
    }
    let a = &f.factors[mode];
    Ok(match kron {
        Some(k) => a * g * k.transpose(),
        None => a * g,
    })
}

/// `‖t − reconstruct(f)‖ / ‖t‖`.
pub fn relative_error(t: &DenseTensor, f: &TuckerFactors) -> Result<f64> {
    let n = norm(t);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let r = reconstruct(f)?;
    Ok(norm(&t.sub(&r)?) / n)
}
