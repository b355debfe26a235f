//! Dense column-major tensors and the multilinear primitives built on them.
//!
//! Elements are stored with the first index varying fastest. The mode-`k`
//! unfolding places mode-`k` fibers in columns; the remaining modes index the
//! columns with lower mode numbers varying fastest (Kolda–Bader ordering).
//! Mode indices are 0-based throughout, so the mode called "1" in most tensor
//! literature is mode `0` here.

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix, column-major.
pub type Matrix = DMatrix<f64>;

/// Order-N real tensor with explicit shape and column-major element order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                len
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (i, e) in idx.iter_mut().zip(&shape) {
                *i += 1;
                if *i < *e {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        let mut stride = 1;
        for (i, e) in idx.iter().zip(&self.shape) {
            debug_assert!(i < e);
            lin += i * stride;
            stride *= e;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_shape(self, other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_shape(self, other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Sub-tensor obtained by keeping the listed indices along `mode`.
    pub fn select(&self, mode: usize, indices: &[usize]) -> Result<Self> {
        self.check_mode(mode)?;
        let extent = self.shape[mode];
        if indices.is_empty() {
            return Err(Error::InvalidParameter("empty index selection".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
            return Err(Error::InvalidParameter(format!(
                "index {bad} out of range for mode {mode} with extent {extent}"
            )));
        }
        let (left, right) = self.left_right(mode);
        let mut shape = self.shape.clone();
        shape[mode] = indices.len();
        let mut data = Vec::with_capacity(left * indices.len() * right);
        for b in 0..right {
            for &i in indices {
                let off = left * (i + extent * b);
                data.extend_from_slice(&self.data[off..off + left]);
            }
        }
        Ok(Self { shape, data })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Products of extents before and after `mode`.
    fn left_right(&self, mode: usize) -> (usize, usize) {
        let left = self.shape[..mode].iter().product();
        let right = self.shape[mode + 1..].iter().product();
        (left, right)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("order must be at least 1".into()));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!(
            "all extents must be positive, got {shape:?}"
        )));
    }
    Ok(())
}

fn check_same_shape(a: &DenseTensor, b: &DenseTensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::DimensionMismatch(format!(
            "tensor shapes {:?} and {:?} differ",
            a.shape, b.shape
        )));
    }
    Ok(())
}

/// Mode-`mode` unfolding: an `extent_mode × ∏_{j≠mode} extent_j` matrix.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    t.check_mode(mode)?;
    let n = t.shape[mode];
    let (left, right) = t.left_right(mode);
    let mut out = Matrix::zeros(n, left * right);
    for b in 0..right {
        for i in 0..n {
            let src = left * (i + n * b);
            for a in 0..left {
                out[(i, a + left * b)] = t.data[src + a];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    validate_shape(shape)?;
    if mode >= shape.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    let n = shape[mode];
    let left: usize = shape[..mode].iter().product();
    let right: usize = shape[mode + 1..].iter().product();
    if m.nrows() != n || m.ncols() != left * right {
        return Err(Error::DimensionMismatch(format!(
            "cannot fold {}x{} matrix at mode {} into shape {:?}",
            m.nrows(),
            m.ncols(),
            mode,
            shape
        )));
    }
    let mut data = vec![0.0; n * left * right];
    for b in 0..right {
        for i in 0..n {
            let dst = left * (i + n * b);
            for a in 0..left {
                data[dst + a] = m[(i, a + left * b)];
            }
        }
    }
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}

/// k-mode product `t ×_mode m`, defined by `unfold(result, mode) = m · unfold(t, mode)`.
pub fn mode_product(t: &DenseTensor, m: &Matrix, mode: usize) -> Result<DenseTensor> {
    t.check_mode(mode)?;
    let n = t.shape[mode];
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns but mode {} has extent {}",
            m.ncols(),
            mode,
            n
        )));
    }
    let rows = m.nrows();
    let (left, right) = t.left_right(mode);
    let mut shape = t.shape.clone();
    shape[mode] = rows;

    if left == 1 {
        // The data block is already the mode-0 unfolding.
        let x = DMatrixView::from_slice(&t.data, n, right);
        let y = m * x;
        return Ok(DenseTensor {
            shape,
            data: y.as_slice().to_vec(),
        });
    }

    // Each slab b is a (left × n) column-major block; its image is slab · mᵀ.
    let mt = m.transpose();
    let mut data = vec![0.0; left * rows * right];
    for b in 0..right {
        let x = DMatrixView::from_slice(&t.data[left * n * b..left * n * (b + 1)], left, n);
        let y = x * &mt;
        data[left * rows * b..left * rows * (b + 1)].copy_from_slice(y.as_slice());
    }
    Ok(DenseTensor { shape, data })
}

/// Applies `mats[k]` along mode `k` for every `Some` entry, in ascending mode order.
pub fn multi_mode_product(t: &DenseTensor, mats: &[Option<&Matrix>]) -> Result<DenseTensor> {
    if mats.len() != t.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrices supplied for order-{} tensor",
            mats.len(),
            t.order()
        )));
    }
    let mut out = t.clone();
    for (k, m) in mats.iter().enumerate() {
        if let Some(m) = m {
            out = mode_product(&out, m, k)?;
        }
    }
    Ok(out)
}

/// Kronecker product `a ⊗ b`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Weighted squared norm `‖W‖²_K = Σᵢ wᵢᵀ K wᵢ = vec(W)ᵀ (I ⊗ K) vec(W)`.
pub fn weighted_norm_sq(w: &Matrix, k: &Matrix) -> Result<f64> {
    if !k.is_square() || k.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {}x{}, kernel is {}x{}",
            w.nrows(),
            w.ncols(),
            k.nrows(),
            k.ncols()
        )));
    }
    let asym = max_asymmetry(k);
    if asym > 1e-10 * k.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let kw = k * w;
    Ok(w.dot(&kw))
}

pub(crate) fn max_asymmetry(k: &Matrix) -> f64 {
    let n = k.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    worst
}

/// Euclidean inner product over all entries.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Frobenius norm of a tensor.
pub fn norm(t: &DenseTensor) -> f64 {
    t.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Column-major vectorization.
pub fn vec(t: &DenseTensor) -> DVector<f64> {
    DVector::from_column_slice(&t.data)
}

/// Matrix viewed as an order-2 tensor (same column-major data).
pub fn matrix_to_tensor(m: &Matrix) -> DenseTensor {
    DenseTensor {
        shape: vec![m.nrows().max(1), m.ncols().max(1)],
        data: m.as_slice().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_222() -> DenseTensor {
        // x(i,j,l) = i + 2(j-1) + 4(l-1) in 1-based indices
        DenseTensor::from_fn(vec![2, 2, 2], |ix| {
            (1 + ix[0] + 2 * ix[1] + 4 * ix[2]) as f64
        })
        .unwrap()
    }

    fn random_tensor(shape: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        DenseTensor::new(
            shape,
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Fiber-enumeration oracle for the unfolding: column `col` decodes into
    /// the remaining indices with the lowest mode varying fastest.
    fn unfold_oracle(t: &DenseTensor, mode: usize) -> Matrix {
        let shape = t.shape();
        let rest: Vec<usize> = (0..shape.len()).filter(|&j| j != mode).collect();
        let cols: usize = rest.iter().map(|&j| shape[j]).product();
        Matrix::from_fn(shape[mode], cols, |i, col| {
            let mut idx = vec![0; shape.len()];
            idx[mode] = i;
            let mut c = col;
            for &j in &rest {
                idx[j] = c % shape[j];
                c /= shape[j];
            }
            t.get(&idx)
        })
    }

    #[test]
    fn unfold_mode0_of_small_example() {
        let t = example_222();
        let m = unfold(&t, 0).unwrap();
        let expected = Matrix::from_row_slice(2, 4, &[1., 3., 5., 7., 2., 4., 6., 8.]);
        assert_eq!(m, expected);
    }

    #[test]
    fn unfold_matches_fiber_oracle() {
        let t = random_tensor(vec![3, 4, 2, 5], 3);
        for k in 0..4 {
            assert_eq!(unfold(&t, k).unwrap(), unfold_oracle(&t, k));
        }
    }

    #[test]
    fn unfold_order1_is_column() {
        let t = DenseTensor::new(vec![3], vec![1., 2., 3.]).unwrap();
        let m = unfold(&t, 0).unwrap();
        assert_eq!(m.shape(), (3, 1));
        assert_eq!(m.as_slice(), &[1., 2., 3.]);
    }

    #[test]
    fn unfold_rejects_bad_mode() {
        let t = example_222();
        assert!(matches!(
            unfold(&t, 3),
            Err(Error::ModeOutOfRange { mode: 3, order: 3 })
        ));
    }

    #[test]
    fn fold_round_trips_exactly() {
        let t = example_222();
        assert_eq!(fold(&unfold(&t, 0).unwrap(), 0, t.shape()).unwrap(), t);
        let t = random_tensor(vec![3, 4, 5], 11);
        for k in 0..3 {
            let back = fold(&unfold(&t, k).unwrap(), k, t.shape()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn fold_vector() {
        let m = Matrix::from_column_slice(2, 1, &[4., 5.]);
        let t = fold(&m, 0, &[2]).unwrap();
        assert_eq!(t.shape(), &[2]);
        assert_eq!(t.data(), &[4., 5.]);
    }

    #[test]
    fn fold_rejects_inconsistent_dims() {
        let m = Matrix::zeros(2, 3);
        assert!(fold(&m, 0, &[2, 2, 2]).is_err());
    }

    #[test]
    fn mode_product_identity_is_noop() {
        let t = random_tensor(vec![3, 4, 5], 5);
        for k in 0..3 {
            let id = Matrix::identity(t.shape()[k], t.shape()[k]);
            assert_eq!(mode_product(&t, &id, k).unwrap(), t);
        }
    }

    #[test]
    fn mode_product_swap_matrix() {
        let t = example_222();
        let swap = Matrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        let y = mode_product(&t, &swap, 0).unwrap();
        // unfold oracle: rows of the mode-0 unfolding exchange
        let expected = Matrix::from_row_slice(2, 4, &[2., 4., 6., 8., 1., 3., 5., 7.]);
        assert_eq!(unfold(&y, 0).unwrap(), expected);
    }

    #[test]
    fn mode_product_matches_unfolding_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = random_tensor(vec![3, 4, 5, 2], 8);
        for k in 0..4 {
            let m = random_matrix(6, t.shape()[k], &mut rng);
            let y = mode_product(&t, &m, k).unwrap();
            let expected = &m * unfold(&t, k).unwrap();
            let diff = (unfold(&y, k).unwrap() - expected).amax();
            assert!(diff < 1e-12, "mode {k}: {diff}");
        }
    }

    #[test]
    fn distinct_mode_products_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tensor(vec![3, 4, 5], 9);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(6, 4, &mut rng);
        let ab = mode_product(&mode_product(&t, &a, 0).unwrap(), &b, 1).unwrap();
        let ba = mode_product(&mode_product(&t, &b, 1).unwrap(), &a, 0).unwrap();
        assert!(norm(&ab.sub(&ba).unwrap()) < 1e-12 * norm(&ab));
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = example_222();
        assert!(mode_product(&t, &Matrix::zeros(2, 3), 0).is_err());
    }

    #[test]
    fn kronecker_identity_is_block_diagonal() {
        let a = Matrix::from_row_slice(2, 2, &[1., 2., 3., 4.]);
        let k = kronecker(&Matrix::identity(2, 2), &a);
        let expected = Matrix::from_row_slice(
            4,
            4,
            &[
                1., 2., 0., 0., 3., 4., 0., 0., 0., 0., 1., 2., 0., 0., 3., 4.,
            ],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn kronecker_transpose_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 2, &mut rng);
        let lhs = kronecker(&a, &b).transpose();
        let rhs = kronecker(&a.transpose(), &b.transpose());
        assert!((lhs - rhs).amax() < 1e-15);
    }

    #[test]
    fn kronecker_mixed_product_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b, c, d) = (
            random_matrix(3, 3, &mut rng),
            random_matrix(3, 3, &mut rng),
            random_matrix(3, 3, &mut rng),
            random_matrix(3, 3, &mut rng),
        );
        let lhs = kronecker(&a, &b) * kronecker(&c, &d);
        let rhs = kronecker(&(&a * &c), &(&b * &d));
        assert!((&lhs - &rhs).norm() <= 1e-12 * rhs.norm());
    }

    #[test]
    fn kronecker_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(3, 2, &mut rng);
        let c = random_matrix(2, 4, &mut rng);
        let b = random_matrix(5, 4, &mut rng);
        let lhs = &a * &c * b.transpose();
        let vc = DVector::from_column_slice(c.as_slice());
        let rhs = kronecker(&b, &a) * vc;
        let lhs = DVector::from_column_slice(lhs.as_slice());
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn weighted_norm_examples() {
        let w = Matrix::from_column_slice(2, 1, &[1., 1.]);
        let k = Matrix::from_row_slice(2, 2, &[2., 1., 1., 2.]);
        assert_eq!(weighted_norm_sq(&w, &k).unwrap(), 6.0);
        assert_eq!(weighted_norm_sq(&Matrix::zeros(2, 3), &k).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = random_matrix(5, 3, &mut rng);
        let fro = w.norm_squared();
        let got = weighted_norm_sq(&w, &Matrix::identity(5, 5)).unwrap();
        assert!((got - fro).abs() <= 1e-12 * fro);
    }

    #[test]
    fn weighted_norm_matches_kronecker_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_matrix(4, 3, &mut rng);
        let r = random_matrix(4, 4, &mut rng);
        let k = &r * r.transpose() + Matrix::identity(4, 4);
        let vw = DVector::from_column_slice(w.as_slice());
        let big = kronecker(&Matrix::identity(3, 3), &k);
        let oracle = vw.dot(&(big * &vw));
        let got = weighted_norm_sq(&w, &k).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn weighted_norm_errors() {
        let w = Matrix::zeros(3, 1);
        let k = Matrix::identity(2, 2);
        assert!(matches!(
            weighted_norm_sq(&w, &k),
            Err(Error::DimensionMismatch(_))
        ));
        let k = Matrix::from_row_slice(2, 2, &[1., 0.5, 0.4, 1.]);
        assert!(matches!(
            weighted_norm_sq(&Matrix::zeros(2, 1), &k),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn inner_and_norm() {
        let ones = DenseTensor::from_fn(vec![2, 2, 2], |_| 1.0).unwrap();
        assert!((norm(&ones) - 8f64.sqrt()).abs() < 1e-15);
        let t = random_tensor(vec![3, 2, 4], 12);
        let n = norm(&t);
        assert!((inner(&t, &t).unwrap() - n * n).abs() < 1e-12);
        assert!(inner(&t, &ones).is_err());
        assert_eq!(vec(&t).len(), 24);
    }

    #[test]
    fn select_matches_fiberwise_copy() {
        let t = random_tensor(vec![3, 4, 5], 13);
        let s = t.select(2, &[0, 2, 4]).unwrap();
        assert_eq!(s.shape(), &[3, 4, 3]);
        assert_eq!(s.get(&[1, 2, 1]), t.get(&[1, 2, 2]));
        let s = t.select(0, &[2]).unwrap();
        assert_eq!(s.get(&[0, 3, 4]), t.get(&[2, 3, 4]));
        assert!(t.select(1, &[4]).is_err());
    }

    #[test]
    fn constructor_invariants() {
        assert!(DenseTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::zeros(vec![2, 0]).is_err());
    }

    proptest! {
        #[test]
        fn unfolding_preserves_norm_and_folds_back(
            shape in proptest::collection::vec(1usize..5, 1..5),
            seed in any::<u64>(),
        ) {
            let t = random_tensor(shape.clone(), seed);
            let n = norm(&t);
            for k in 0..shape.len() {
                let m = unfold(&t, k).unwrap();
                prop_assert!((m.norm() - n).abs() <= 1e-12 * n.max(1.0));
                prop_assert_eq!(&fold(&m, k, &shape).unwrap(), &t);
            }
        }
    }
}
