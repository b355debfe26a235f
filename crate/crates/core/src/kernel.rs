//! Kernels on the continuous mode and their Gram matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(−(x − y)² / (2·bandwidth²))`
    Gaussian,
}

/// Kernel family plus its bandwidth.
///
/// The Gaussian bandwidth is the scale parameter sometimes written `c` or `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::Gaussian,
            bandwidth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let d = x - y;
                (-(d * d) / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
        }
    }
}

/// Strictly increasing, finite sampling locations of the continuous mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DesignGrid(Vec<f64>);

impl DesignGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid(
                "grid must contain at least one point".into(),
            ));
        }
        if let Some(bad) = points.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite grid point {bad}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "grid must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        Ok(Self(points))
    }

    /// `p` equally spaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidGrid("grid size must be positive".into()));
        }
        if p == 1 {
            return Self::new(vec![lo]);
        }
        let step = (hi - lo) / (p - 1) as f64;
        Self::new((0..p).map(|i| lo + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Grid restricted to the given (strictly increasing) indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(indices.len());
        for &i in indices {
            let v = self.0.get(i).ok_or_else(|| {
                Error::InvalidGrid(format!("index {i} out of range for grid of {}", self.len()))
            })?;
            pts.push(*v);
        }
        Self::new(pts)
    }
}

impl TryFrom<Vec<f64>> for DesignGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<DesignGrid> for Vec<f64> {
    fn from(g: DesignGrid) -> Self {
        g.0
    }
}

/// Kernel matrix `K_ij = k(x_i, x_j)` on the design grid.
pub fn gram(spec: &KernelSpec, grid: &DesignGrid) -> Matrix {
    cross_gram(spec, grid, grid)
}

/// Matrix of kernel evaluations between `eval_points` (rows) and `design` (columns).
pub fn cross_gram(spec: &KernelSpec, eval_points: &DesignGrid, design: &DesignGrid) -> Matrix {
    let (e, d) = (eval_points.points(), design.points());
    Matrix::from_fn(e.len(), d.len(), |i, j| spec.eval(e[i], d[j]))
}
