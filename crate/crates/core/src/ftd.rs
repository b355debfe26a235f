//! Functional Tucker decomposition.
//!
//! A tensor whose last mode samples a continuous process at design points
//! `x₁ … x_p` is approximated as
//!
//! ```text
//! T ≈ G ×₀ A₀ ×₁ A₁ … ×_d (K·W)
//! ```
//!
//! where the discrete factors `A_j` have orthonormal columns, `K` is the
//! kernel Gram matrix of the design points and `W` (p × s) holds the
//! kernel-expansion weights of the `s` functional factors. The fit minimizes
//!
//! ```text
//! ½‖T − G ×₀ A₀ … ×_d KW‖² + (λ/2)‖W‖²_K
//! ```
//!
//! by alternating exact block updates: each discrete factor (followed by an
//! SVD that moves the non-orthogonal part into the core), then `W`, then the
//! core. Every block update solves its subproblem exactly, so the objective
//! never increases across updates.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_gram, gram, DesignGrid, KernelSpec};
use crate::linalg::{orthonormalize, symmetric_eigen, solve_left_capped, solve_right_capped, truncated_svd};
use crate::tensor::{
    fold, kronecker, mode_product, norm, unfold, weighted_norm_sq, DenseTensor, Matrix,
};

/// Largest admissible `s·p` for the explicitly assembled weight system.
pub const MAX_WEIGHT_SYSTEM: usize = 20_000;

/// How the change in relative error is compared against `tol`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `|ε_t − ε_{t−1}| < tol`
    #[default]
    Relative,
    /// `|ε_t − ε_{t−1}| < tol·‖T‖`
    ScaledByNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtdConfig {
    /// One rank per mode; the continuous-mode rank comes last.
    pub ranks: Vec<usize>,
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub stop_rule: StopRule,
}

impl FtdConfig {
    pub fn new(ranks: Vec<usize>, kernel: KernelSpec) -> Self {
        Self {
            ranks,
            lambda: 1e-8,
            max_iters: 200,
            tol: 1e-8,
            seed: 0,
            kernel,
            stop_rule: StopRule::Relative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if self.ranks.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least one discrete and one continuous rank".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted functional Tucker model.
#[derive(Debug, Clone, PartialEq)]
pub struct FtdModel {
    pub core: DenseTensor,
    pub discrete_factors: Vec<Matrix>,
    /// `p × s` kernel-expansion weights.
    pub weights: Matrix,
    pub design: DesignGrid,
    pub kernel: KernelSpec,
    pub lambda: f64,
    /// Relative reconstruction error after each sweep.
    pub trace: Vec<f64>,
    /// Objective value after each sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    gram: Matrix,
}

impl FtdModel {
    /// Assembles a model from its parts, checking shapes.
    pub fn from_parts(
        core: DenseTensor,
        discrete_factors: Vec<Matrix>,
        weights: Matrix,
        design: DesignGrid,
        kernel: KernelSpec,
        lambda: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if core.order() != discrete_factors.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "order-{} core with {} discrete factors",
                core.order(),
                discrete_factors.len()
            )));
        }
        for (k, a) in discrete_factors.iter().enumerate() {
            if a.ncols() != core.shape()[k] {
                return Err(Error::DimensionMismatch(format!(
                    "discrete factor {k} has {} columns, core extent is {}",
                    a.ncols(),
                    core.shape()[k]
                )));
            }
        }
        let s = *core.shape().last().expect("non-empty shape");
        if weights.nrows() != design.len() || weights.ncols() != s {
            return Err(Error::DimensionMismatch(format!(
                "weights are {}x{}, expected {}x{}",
                weights.nrows(),
                weights.ncols(),
                design.len(),
                s
            )));
        }
        let gram = gram(&kernel, &design);
        Ok(Self {
            core,
            discrete_factors,
            weights,
            design,
            kernel,
            lambda,
            trace: Vec::new(),
            objective_trace: Vec::new(),
            converged: false,
            gram,
        })
    }

    pub fn with_traces(mut self, trace: Vec<f64>, objective_trace: Vec<f64>) -> Self {
        self.trace = trace;
        self.objective_trace = objective_trace;
        self
    }

    /// Kernel Gram matrix on the design grid.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Functional factor evaluated on the design grid, `K·W`.
    pub fn continuous_factor(&self) -> Matrix {
        &self.gram * &self.weights
    }

    /// Shape of the tensor the model reconstructs on its design grid.
    pub fn shape(&self) -> Vec<usize> {
        let mut shape: Vec<usize> = self.discrete_factors.iter().map(|a| a.nrows()).collect();
        shape.push(self.design.len());
        shape
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        expand(
            &self.core,
            &self.discrete_factors,
            &self.continuous_factor(),
        )
    }

    pub fn final_error(&self) -> Option<f64> {
        self.trace.last().copied()
    }
}

fn expand(core: &DenseTensor, discrete: &[Matrix], continuous: &Matrix) -> Result<DenseTensor> {
    let mut out = core.clone();
    for (k, a) in discrete.iter().enumerate() {
        out = mode_product(&out, a, k)?;
    }
    mode_product(&out, continuous, discrete.len())
}

/// `T ×₀ A₀ᵀ ×₁ A₁ᵀ …` over the discrete modes.
fn project(t: &DenseTensor, discrete: &[Matrix]) -> Result<DenseTensor> {
    let mut out = t.clone();
    for (k, a) in discrete.iter().enumerate() {
        out = mode_product(&out, &a.transpose(), k)?;
    }
    Ok(out)
}

/// Objective `½‖T − reconstruction‖² + (λ/2)‖W‖²_K`.
pub fn objective(model: &FtdModel, t: &DenseTensor) -> Result<f64> {
    let r = model.reconstruct()?;
    if r.shape() != t.shape() {
        return Err(Error::DimensionMismatch(format!(
            "model shape {:?} vs tensor shape {:?}",
            r.shape(),
            t.shape()
        )));
    }
    let resid = norm(&t.sub(&r)?);
    let reg = weighted_norm_sq(&model.weights, &model.gram)?;
    Ok(0.5 * resid * resid + 0.5 * model.lambda * reg)
}

/// Relative normal-equation residual reported by a block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockReport {
    pub normal_residual: f64,
}

fn weight_system_dims(
    t: &DenseTensor,
    core: &DenseTensor,
    discrete_factors: &[Matrix],
    k: &Matrix,
) -> Result<()> {
    let d = discrete_factors.len();
    if t.order() != d + 1 || core.order() != d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "tensor order {} / core order {} with {} discrete factors",
            t.order(),
            core.order(),
            d
        )));
    }
    let p = t.shape()[d];
    let s = core.shape()[d];
    if s * p > MAX_WEIGHT_SYSTEM {
        return Err(Error::InvalidParameter(format!(
            "weight system of size {} exceeds the limit of {MAX_WEIGHT_SYSTEM}",
            s * p
        )));
    }
    if !k.is_square() || k.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrix is {}x{}, continuous extent is {p}",
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(())
}

/// Weight-system matrix `G_(d)G_(d)ᵀ ⊗ K + λI` and right-hand side
/// `vec(Y_(d) G_(d)ᵀ)` with `Y = T` projected by all discrete factor transposes.
pub fn weight_system(
    t: &DenseTensor,
    core: &DenseTensor,
    discrete_factors: &[Matrix],
    k: &Matrix,
    lambda: f64,
) -> Result<(Matrix, DVector<f64>)> {
    weight_system_dims(t, core, discrete_factors, k)?;
    let (rhs, ggt) = weight_terms(t, core, discrete_factors)?;
    let n = ggt.nrows() * k.nrows();
    let mut l = kronecker(&ggt, k);
    for i in 0..n {
        l[(i, i)] += lambda;
    }
    Ok((l, DVector::from_column_slice(rhs.as_slice())))
}

/// Eigendecomposition `K = V·diag(e)·Vᵀ` with eigenvalues clamped at zero.
#[derive(Debug, Clone)]
pub struct GramEigen {
    values: DVector<f64>,
    vectors: Matrix,
}

impl GramEigen {
    pub fn new(k: &Matrix) -> Result<Self> {
        let (values, vectors) = symmetric_eigen(k)?;
        Ok(Self {
            values: values.map(|e| e.max(0.0)),
            vectors,
        })
    }
}

/// Solves `K·W·M + λW = R` for symmetric PSD `M` in the joint eigenbasis of
/// `K` and `M`; each entry of the rotated unknown is a scalar division.
fn solve_weight_equation(
    eig: &GramEigen,
    m: &Matrix,
    r: &Matrix,
    lambda: f64,
) -> Result<Matrix> {
    let (d, u) = symmetric_eigen(m)?;
    let d = d.map(|v| v.max(0.0));
    let u = &u;
    let v = &eig.vectors;
    let mut z = v.transpose() * r * u;
    for j in 0..z.ncols() {
        for i in 0..z.nrows() {
            z[(i, j)] /= eig.values[i] * d[j] + lambda;
        }
    }
    Ok(v * z * u.transpose())
}

/// Pieces of the weight equation: `Y_(d) G_(d)ᵀ` and `G_(d) G_(d)ᵀ`.
fn weight_terms(
    t: &DenseTensor,
    core: &DenseTensor,
    discrete_factors: &[Matrix],
) -> Result<(Matrix, Matrix)> {
    let d = discrete_factors.len();
    let y = project(t, discrete_factors)?;
    let yd = unfold(&y, d)?;
    let gd = unfold(core, d)?;
    if yd.ncols() != gd.ncols() {
        return Err(Error::DimensionMismatch(
            "core extents do not match discrete factor ranks".into(),
        ));
    }
    Ok((&yd * gd.transpose(), &gd * gd.transpose()))
}

/// Exact minimizer over `W` of the objective with everything else fixed.
///
/// The discrete factors must have orthonormal columns.
pub fn solve_weights(
    t: &DenseTensor,
    core: &DenseTensor,
    discrete_factors: &[Matrix],
    k: &Matrix,
    lambda: f64,
) -> Result<Matrix> {
    // shape and size checks
    weight_system_dims(t, core, discrete_factors, k)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let (r, m) = weight_terms(t, core, discrete_factors)?;
    solve_weight_equation(&GramEigen::new(k)?, &m, &r, lambda)
}

/// Working state of the alternating least-squares iteration.
///
/// Exposed so that individual block updates can be inspected; [`fit`] drives
/// it in the standard order.
pub struct AlsState<'a> {
    t: &'a DenseTensor,
    gram: Matrix,
    gram_eigen: GramEigen,
    lambda: f64,
    pub core: DenseTensor,
    pub discrete_factors: Vec<Matrix>,
    pub weights: Matrix,
    /// Upper bound on the rank of `W`; after a `W` update it is at most the
    /// product of the discrete ranks.
    weights_rank: usize,
}

impl<'a> AlsState<'a> {
    /// Random orthonormal discrete factors, Gaussian weights scaled by `1/p`,
    /// and the core from an exact core solve.
    pub fn initialize(t: &'a DenseTensor, cfg: &FtdConfig, design: &DesignGrid) -> Result<Self> {
        cfg.validate()?;
        if !t.is_finite() {
            return Err(Error::NonFinite("input tensor"));
        }
        if t.order() < 2 {
            return Err(Error::InvalidShape(
                "tensor needs at least one discrete and one continuous mode".into(),
            ));
        }
        if cfg.ranks.len() != t.order() {
            return Err(Error::DimensionMismatch(format!(
                "{} ranks for order-{} tensor",
                cfg.ranks.len(),
                t.order()
            )));
        }
        let d = t.order() - 1;
        let p = t.shape()[d];
        if p != design.len() {
            return Err(Error::DimensionMismatch(format!(
                "continuous extent {p} but {} design points",
                design.len()
            )));
        }
        for (mode, (&r, &e)) in cfg.ranks.iter().zip(t.shape()).enumerate() {
            if r == 0 || r > e {
                return Err(Error::RankOutOfRange {
                    mode,
                    rank: r,
                    max: e,
                });
            }
        }
        let s = cfg.ranks[d];
        if s * p > MAX_WEIGHT_SYSTEM {
            return Err(Error::InvalidParameter(format!(
                "weight system of size {} exceeds the limit of {MAX_WEIGHT_SYSTEM}",
                s * p
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let discrete_factors: Vec<Matrix> = (0..d)
            .map(|k| {
                let g = Matrix::from_fn(t.shape()[k], cfg.ranks[k], |_, _| normal());
                orthonormalize(&g)
            })
            .collect();
        let weights = Matrix::from_fn(p, s, |_, _| normal() / p as f64);

        let gram = gram(&cfg.kernel, design);
        let gram_eigen = GramEigen::new(&gram)?;
        let mut state = Self {
            t,
            gram,
            gram_eigen,
            lambda: cfg.lambda,
            core: DenseTensor::zeros(cfg.ranks.clone())?,
            discrete_factors,
            weights,
            weights_rank: s,
        };
        state.update_core()?;
        Ok(state)
    }

    fn continuous_mode(&self) -> usize {
        self.discrete_factors.len()
    }

    pub fn continuous_factor(&self) -> Matrix {
        &self.gram * &self.weights
    }

    /// Least-squares update of discrete factor `k`, then orthogonalization:
    /// the factor becomes the left singular vectors and `Σ·Vᵀ` is absorbed
    /// into the core.
    ///
    /// The other discrete factors have orthonormal columns, so the problem
    /// is solved on `T` projected onto them; the minimum-norm solution is
    /// the same as for the full unfolding.
    pub fn update_discrete(&mut self, k: usize) -> Result<BlockReport> {
        let d = self.continuous_mode();
        if k >= d {
            return Err(Error::ModeOutOfRange { mode: k, order: d });
        }
        let mut projected = self.t.clone();
        for (j, a) in self.discrete_factors.iter().enumerate() {
            if j != k {
                projected = mode_product(&projected, &a.transpose(), j)?;
            }
        }
        let target = unfold(&projected, k)?;
        let partial = mode_product(&self.core, &self.continuous_factor(), d)?;
        let m = unfold(&partial, k)?;
        let others: usize = (0..d)
            .filter(|&j| j != k)
            .map(|j| self.core.shape()[j])
            .product();
        let cap = self.core.shape()[k].min(others * self.weights_rank);
        let a1 = solve_right_capped(&target, &m, cap)?.solution;

        let resid = &target - &a1 * &m;
        let normal_residual =
            (&resid * m.transpose()).norm() / (target.norm() * m.norm()).max(f64::MIN_POSITIVE);

        let rank = self.core.shape()[k];
        let svd = truncated_svd(&a1, rank)?;
        let mut push = svd.vt;
        for (i, s) in svd.s.iter().enumerate() {
            push.row_mut(i).scale_mut(*s);
        }
        self.core = mode_product(&self.core, &push, k)?;
        self.discrete_factors[k] = svd.u;
        Ok(BlockReport { normal_residual })
    }

    /// Exact `W` update; requires orthonormal discrete factors.
    pub fn update_weights(&mut self) -> Result<BlockReport> {
        let (r, m) = weight_terms(self.t, &self.core, &self.discrete_factors)?;
        let w = solve_weight_equation(&self.gram_eigen, &m, &r, self.lambda)?;
        let kw = &self.gram * &w;
        let resid = &kw * &m + &w * self.lambda - &r;
        let scale = (&kw * &m).norm() + self.lambda * w.norm() + r.norm();
        let normal_residual = resid.norm() / scale.max(f64::MIN_POSITIVE);
        self.weights = w;
        let d = self.continuous_mode();
        let discrete: usize = self.core.shape()[..d].iter().product();
        self.weights_rank = self.core.shape()[d].min(discrete);
        Ok(BlockReport { normal_residual })
    }

    /// Core update: solve `(K·W)·G_(d) = Y_(d)` in the least-squares sense.
    pub fn update_core(&mut self) -> Result<BlockReport> {
        let d = self.continuous_mode();
        let y = project(self.t, &self.discrete_factors)?;
        let yd = unfold(&y, d)?;
        let c = self.continuous_factor();
        let gd = solve_left_capped(&c, &yd, self.weights_rank)?.solution;
        let resid = &yd - &c * &gd;
        let normal_residual =
            (c.transpose() * resid).norm() / (c.norm() * yd.norm()).max(f64::MIN_POSITIVE);
        self.core = fold(&gd, d, self.core.shape())?;
        Ok(BlockReport { normal_residual })
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        expand(
            &self.core,
            &self.discrete_factors,
            &self.continuous_factor(),
        )
    }

    /// Relative reconstruction error `‖T − X‖/‖T‖`.
    pub fn relative_error(&self) -> Result<f64> {
        let n = norm(self.t);
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(norm(&self.t.sub(&self.reconstruct()?)?) / n)
    }

    pub fn objective(&self) -> Result<f64> {
        let r = norm(&self.t.sub(&self.reconstruct()?)?);
        let reg = weighted_norm_sq(&self.weights, &self.gram)?;
        Ok(0.5 * r * r + 0.5 * self.lambda * reg)
    }

    /// Relative error and objective from a single reconstruction.
    fn error_and_objective(&self, t_norm: f64) -> Result<(f64, f64)> {
        let r = norm(&self.t.sub(&self.reconstruct()?)?);
        let reg = weighted_norm_sq(&self.weights, &self.gram)?;
        Ok((r / t_norm, 0.5 * r * r + 0.5 * self.lambda * reg))
    }

    /// One sweep: every discrete factor in ascending order, then `W`, then the core.
    pub fn sweep(&mut self) -> Result<Vec<BlockReport>> {
        let mut reports = Vec::with_capacity(self.continuous_mode() + 2);
        for k in 0..self.continuous_mode() {
            reports.push(self.update_discrete(k)?);
        }
        reports.push(self.update_weights()?);
        reports.push(self.update_core()?);
        Ok(reports)
    }

    fn into_model(
        self,
        design: &DesignGrid,
        kernel: KernelSpec,
        trace: Vec<f64>,
        objective_trace: Vec<f64>,
        converged: bool,
    ) -> FtdModel {
        FtdModel {
            core: self.core,
            discrete_factors: self.discrete_factors,
            weights: self.weights,
            design: design.clone(),
            kernel,
            lambda: self.lambda,
            trace,
            objective_trace,
            converged,
            gram: self.gram,
        }
    }
}

/// Fits a functional Tucker model to `t`, whose last mode is sampled at `design`.
///
/// Stops once the change in relative error between consecutive sweeps falls
/// below the configured tolerance, or after `max_iters` sweeps.
pub fn fit(t: &DenseTensor, cfg: &FtdConfig, design: &DesignGrid) -> Result<FtdModel> {
    let t_norm = norm(t);
    if t_norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let threshold = match cfg.stop_rule {
        StopRule::Relative => cfg.tol,
        StopRule::ScaledByNorm => cfg.tol * t_norm,
    };
    let mut state = AlsState::initialize(t, cfg, design)?;
    let mut trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut converged = false;
    for it in 0..cfg.max_iters {
        state.sweep()?;
        let (eps, obj) = state.error_and_objective(t_norm)?;
        objective_trace.push(obj);
        trace.push(eps);
        log::trace!("ftd sweep {}: relative error {eps:e}", it + 1);
        if it > 0 && (eps - trace[it - 1]).abs() < threshold {
            converged = true;
            break;
        }
    }
    Ok(state.into_model(design, cfg.kernel, trace, objective_trace, converged))
}

/// Functional factor evaluated at arbitrary points: `k(points, design)·W`.
pub fn evaluate_factor(model: &FtdModel, points: &DesignGrid) -> Matrix {
    cross_gram(&model.kernel, points, &model.design) * &model.weights
}

/// Reconstruction with the continuous mode evaluated at `points`.
pub fn reconstruct_on(model: &FtdModel, points: &DesignGrid) -> Result<DenseTensor> {
    expand(
        &model.core,
        &model.discrete_factors,
        &evaluate_factor(model, points),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_right;
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
        let len = shape.iter().product();
        DenseTensor::new(
            shape,
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn small_case(seed: u64) -> (DenseTensor, FtdConfig, DesignGrid) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(vec![5, 4, 6], &mut rng);
        let design = DesignGrid::uniform(0.0, 5.0, 6).unwrap();
        let mut cfg = FtdConfig::new(vec![2, 2, 2], KernelSpec::gaussian(1.0).unwrap());
        cfg.lambda = 0.1;
        cfg.seed = seed;
        cfg.max_iters = 30;
        (t, cfg, design)
    }

    #[test]
    fn fit_trace_and_objective_monotone() {
        let (t, cfg, design) = small_case(1);
        let m = fit(&t, &cfg, &design).unwrap();
        assert!(!m.trace.is_empty());
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        let obj = objective(&m, &t).unwrap();
        assert!((obj - m.objective_trace.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn every_block_update_is_monotone() {
        let (t, cfg, design) = small_case(2);
        let mut st = AlsState::initialize(&t, &cfg, &design).unwrap();
        let mut prev = st.objective().unwrap();
        for _ in 0..5 {
            for k in 0..2 {
                st.update_discrete(k).unwrap();
                let o = st.objective().unwrap();
                assert!(o <= prev + 1e-9, "discrete {k}: {o} > {prev}");
                prev = o;
            }
            st.update_weights().unwrap();
            let o = st.objective().unwrap();
            assert!(o <= prev + 1e-9);
            prev = o;
            st.update_core().unwrap();
            let o = st.objective().unwrap();
            assert!(o <= prev + 1e-9);
            prev = o;
        }
    }

    #[test]
    fn orthogonalization_leaves_reconstruction_unchanged() {
        let (t, cfg, design) = small_case(3);
        let mut st = AlsState::initialize(&t, &cfg, &design).unwrap();
        // reconstruct with the raw least-squares factor, before the SVD push
        let c = st.continuous_factor();
        let mut partial = mode_product(&st.core, &st.discrete_factors[1], 1).unwrap();
        partial = mode_product(&partial, &c, 2).unwrap();
        let m = unfold(&partial, 0).unwrap();
        let a1 = solve_right(&unfold(&t, 0).unwrap(), &m).unwrap().solution;
        let before = mode_product(&partial, &a1, 0).unwrap();
        st.update_discrete(0).unwrap();
        let after = st.reconstruct().unwrap();
        assert!(norm(&before.sub(&after).unwrap()) <= 1e-10 * norm(&before));
        let a = &st.discrete_factors[0];
        assert!((a.transpose() * a - Matrix::identity(2, 2)).amax() < 1e-9);
    }

    #[test]
    fn solve_weights_huge_lambda_vanishes() {
        let (t, cfg, design) = small_case(4);
        let st = AlsState::initialize(&t, &cfg, &design).unwrap();
        let k = gram(&cfg.kernel, &design);
        let w = solve_weights(&t, &st.core, &st.discrete_factors, &k, 1e12).unwrap();
        assert!(w.amax() <= 1e-6);
    }

    #[test]
    fn evaluate_factor_on_design_is_kw() {
        let (t, cfg, design) = small_case(5);
        let m = fit(&t, &cfg, &design).unwrap();
        assert_eq!(evaluate_factor(&m, &design), m.continuous_factor());
        let far = DesignGrid::new(vec![1e3]).unwrap();
        assert!(evaluate_factor(&m, &far).amax() <= 1e-10);
        let on = reconstruct_on(&m, &design).unwrap();
        let r = m.reconstruct().unwrap();
        assert!(norm(&on.sub(&r).unwrap()) <= 1e-12 * norm(&r));
    }

    #[test]
    fn reconstruct_on_subset_matches_slicing() {
        let (t, cfg, design) = small_case(6);
        let m = fit(&t, &cfg, &design).unwrap();
        let idx = [1, 3, 4];
        let sub = design.subset(&idx).unwrap();
        let a = reconstruct_on(&m, &sub).unwrap();
        let b = m.reconstruct().unwrap().select(2, &idx).unwrap();
        assert!(norm(&a.sub(&b).unwrap()) <= 1e-12 * norm(&b));
    }

    #[test]
    fn objective_of_zero_model() {
        let (t, cfg, design) = small_case(7);
        let m = FtdModel::from_parts(
            DenseTensor::zeros(vec![2, 2, 2]).unwrap(),
            vec![Matrix::identity(5, 2), Matrix::identity(4, 2)],
            Matrix::zeros(6, 2),
            design,
            cfg.kernel,
            0.5,
        )
        .unwrap();
        let n = norm(&t);
        assert!((objective(&m, &t).unwrap() - 0.5 * n * n).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let (t, cfg, design) = small_case(8);
        let mut bad = cfg.clone();
        bad.ranks = vec![6, 2, 2];
        assert!(matches!(
            fit(&t, &bad, &design),
            Err(Error::RankOutOfRange { mode: 0, .. })
        ));
        let mut bad = cfg.clone();
        bad.lambda = 0.0;
        assert!(fit(&t, &bad, &design).is_err());
        let short = DesignGrid::uniform(0.0, 1.0, 5).unwrap();
        assert!(fit(&t, &cfg, &short).is_err());
        let mut nan = t.clone();
        nan.data_mut()[0] = f64::NAN;
        assert!(matches!(fit(&nan, &cfg, &design), Err(Error::NonFinite(_))));
        let zero = DenseTensor::zeros(t.shape().to_vec()).unwrap();
        assert!(matches!(fit(&zero, &cfg, &design), Err(Error::ZeroNorm)));
    }

    #[test]
    fn weight_system_size_guard() {
        let t = DenseTensor::zeros(vec![2, 2, 10_001]).unwrap();
        let core = DenseTensor::zeros(vec![1, 1, 2]).unwrap();
        let k = Matrix::identity(1, 1);
        let facs = vec![Matrix::identity(2, 1), Matrix::identity(2, 1)];
        assert!(matches!(
            weight_system(&t, &core, &facs, &k, 1.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn order_four_fit_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_tensor(vec![4, 3, 3, 5], &mut rng);
        let design = DesignGrid::uniform(1.0, 3.0, 5).unwrap();
        let mut cfg = FtdConfig::new(vec![2, 2, 2, 2], KernelSpec::gaussian(0.8).unwrap());
        cfg.lambda = 1e-3;
        cfg.max_iters = 20;
        let m = fit(&t, &cfg, &design).unwrap();
        assert_eq!(m.core.shape(), &[2, 2, 2, 2]);
        assert_eq!(m.discrete_factors.len(), 3);
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (t, cfg, design) = small_case(10);
        let a = fit(&t, &cfg, &design).unwrap();
        let b = fit(&t, &cfg, &design).unwrap();
        assert_eq!(a, b);
    }
}
