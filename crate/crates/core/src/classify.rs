//! Subspace classification with HOSVD class bases.
//!
//! Training samples of one class are stacked along a new leading mode and
//! decomposed with a rank-`(M, r₁, …, s)` HOSVD, where `M` is the number of
//! samples. The leading `k` mode-0 slices of `G ×₁ A₁ … ×_d A_d` are mutually
//! orthogonal (all-orthogonality of the core); normalized, they form the
//! class basis. A test sample `y` of unit norm is scored against each class
//! by the projection residual `1 − Σ_ν ⟨y, D_ν⟩²` and assigned to the class
//! with the smallest residual.
//!
//! For domain transfer the class tensors are replaced by reconstructions of
//! per-class functional Tucker models evaluated on the test grid.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ftd::{self, FtdConfig, FtdModel};
use crate::kernel::DesignGrid;
use crate::linalg::truncated_svd;
use crate::tensor::{inner, mode_product, norm, unfold, DenseTensor};
use crate::tucker::hosvd;

/// Samples with class labels and the continuous-mode grid they share.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<DenseTensor>,
    /// Class ids, indices into `class_names`.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub grid: DesignGrid,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<DenseTensor>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        grid: DesignGrid,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDataset("no samples".into()));
        }
        if samples.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let shape = samples[0].shape();
        if let Some(s) = samples.iter().find(|s| s.shape() != shape) {
            return Err(Error::InvalidDataset(format!(
                "sample shapes differ: {:?} vs {:?}",
                shape,
                s.shape()
            )));
        }
        if shape[shape.len() - 1] != grid.len() {
            return Err(Error::InvalidDataset(format!(
                "last sample extent {} does not match {} grid points",
                shape[shape.len() - 1],
                grid.len()
            )));
        }
        let mut counts = vec![0usize; class_names.len()];
        for &l in &labels {
            *counts.get_mut(l).ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "label {l} out of range for {} classes",
                    class_names.len()
                ))
            })? += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidDataset(format!(
                "class '{}' has no samples",
                class_names[c]
            )));
        }
        Ok(Self {
            samples,
            labels,
            class_names,
            grid,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.samples[0].shape()
    }

    pub fn sample_order(&self) -> usize {
        self.samples[0].order()
    }

    /// Positions of the samples belonging to class `c`, in dataset order.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Dataset restricted to the given sample positions.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(samples, labels, self.class_names.clone(), self.grid.clone())
    }

    /// Unit-normalized samples of class `c` stacked along a new leading mode.
    pub fn class_tensor(&self, c: usize) -> Result<DenseTensor> {
        let normalized = self
            .class_indices(c)
            .into_iter()
            .map(|i| normalize(&self.samples[i]))
            .collect::<Result<Vec<_>>>()?;
        stack_samples(&normalized)
    }
}

/// Sample scaled to unit Frobenius norm.
pub fn normalize(t: &DenseTensor) -> Result<DenseTensor> {
    let n = norm(t);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(t.scale(1.0 / n))
}

/// Stacks equally shaped tensors along a new leading mode.
pub fn stack_samples(samples: &[DenseTensor]) -> Result<DenseTensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidDataset("nothing to stack".into()))?;
    let m = samples.len();
    let len = first.len();
    let mut data = vec![0.0; m * len];
    for (i, s) in samples.iter().enumerate() {
        if s.shape() != first.shape() {
            return Err(Error::DimensionMismatch("sample shapes differ".into()));
        }
        for (j, v) in s.data().iter().enumerate() {
            data[i + m * j] = *v;
        }
    }
    let mut shape = vec![m];
    shape.extend_from_slice(first.shape());
    DenseTensor::new(shape, data)
}

/// Orthonormal basis arrays describing one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBasis {
    pub label: usize,
    pub elements: Vec<DenseTensor>,
}

impl ClassBasis {
    pub fn k(&self) -> usize {
        self.elements.len()
    }

    /// Basis restricted to its first `k` elements.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a {}-element basis to {k}",
                self.k()
            )));
        }
        Ok(Self {
            label: self.label,
            elements: self.elements[..k].to_vec(),
        })
    }
}

fn check_sample_ranks(sample_shape: &[usize], ranks: &[usize]) -> Result<()> {
    if ranks.len() != sample_shape.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for order-{} samples",
            ranks.len(),
            sample_shape.len()
        )));
    }
    for (mode, (&r, &e)) in ranks.iter().zip(sample_shape).enumerate() {
        if r == 0 || r > e {
            return Err(Error::RankOutOfRange {
                mode: mode + 1,
                rank: r,
                max: e,
            });
        }
    }
    Ok(())
}

/// Class basis from a stacked class tensor (`M × sample shape`).
///
/// `ranks` apply to the sample modes; the stacking mode keeps rank `M`.
/// The sample-mode factor is taken from the tensor already projected onto
/// the truncated sample-mode subspaces, so the mode-0 core slices stay
/// mutually orthogonal even when those ranks are truncated.
pub fn bases_from_class_tensor(
    label: usize,
    x: &DenseTensor,
    ranks: &[usize],
    k: usize,
) -> Result<ClassBasis> {
    let m = x.shape()[0];
    let sample_shape = x.shape()[1..].to_vec();
    check_sample_ranks(&sample_shape, ranks)?;
    if k == 0 || k >= m {
        return Err(Error::InvalidParameter(format!(
            "basis size k = {k} must satisfy 1 <= k < {m} (class size)"
        )));
    }
    let mut full_ranks = vec![1];
    full_ranks.extend_from_slice(ranks);
    let f = hosvd(x, &full_ranks)?;
    let mut projected = x.clone();
    for (j, a) in f.factors.iter().enumerate().skip(1) {
        projected = mode_product(&projected, &(a * a.transpose()), j)?;
    }
    let unf = unfold(&projected, 0)?;
    let kmax = unf.nrows().min(unf.ncols());
    if k > kmax {
        return Err(Error::InvalidParameter(format!(
            "basis size k = {k} exceeds the {kmax} available directions"
        )));
    }
    let svd = truncated_svd(&unf, k)?;
    let s0 = svd.s[0];
    let elements = (0..k)
        .map(|nu| {
            if s0 == 0.0 || svd.s[nu] <= 1e-12 * s0 {
                return Err(Error::InvalidParameter(format!(
                    "basis element {} of class {label} vanishes; reduce k",
                    nu + 1
                )));
            }
            let row: Vec<f64> = svd.vt.row(nu).iter().copied().collect();
            normalize(&DenseTensor::new(sample_shape.clone(), row)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassBasis { label, elements })
}

fn min_class_size(data: &LabeledDataset) -> usize {
    (0..data.num_classes())
        .map(|c| data.class_indices(c).len())
        .min()
        .unwrap_or(0)
}

/// One HOSVD basis of `k` elements per class.
pub fn train_hosvd(data: &LabeledDataset, ranks: &[usize], k: usize) -> Result<Vec<ClassBasis>> {
    check_sample_ranks(data.sample_shape(), ranks)?;
    let smallest = min_class_size(data);
    if k == 0 || k >= smallest {
        return Err(Error::InvalidParameter(format!(
            "basis size k = {k} must satisfy 1 <= k < {smallest} (smallest class)"
        )));
    }
    (0..data.num_classes())
        .into_par_iter()
        .map(|c| bases_from_class_tensor(c, &data.class_tensor(c)?, ranks, k))
        .collect()
}

/// `1 − Σ_ν ⟨y, D_ν⟩²` for a unit-norm sample `y`.
pub fn residual(y: &DenseTensor, basis: &ClassBasis) -> Result<f64> {
    Ok(*residual_profile(y, basis)?.last().expect("non-empty basis"))
}

/// Residuals against the first 1, 2, …, k basis elements.
pub fn residual_profile(y: &DenseTensor, basis: &ClassBasis) -> Result<Vec<f64>> {
    let n = norm(y);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "test sample must be unit-normalized (norm {n})"
        )));
    }
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(basis.k());
    for d in &basis.elements {
        let a = inner(y, d)?;
        acc += a * a;
        out.push(1.0 - acc);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("empty class basis".into()));
    }
    Ok(out)
}

fn argmin_label(scores: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (label, r) in scores {
        best = match best {
            Some((bl, br)) if r > br || (r == br && label > bl) => Some((bl, br)),
            _ => Some((label, r)),
        };
    }
    best.expect("at least one basis").0
}

/// Class with the smallest residual; ties go to the smallest class id.
/// The sample is normalized first.
pub fn predict(y: &DenseTensor, bases: &[ClassBasis]) -> Result<usize> {
    if bases.is_empty() {
        return Err(Error::InvalidParameter("no class bases".into()));
    }
    let y = normalize(y)?;
    let scores = bases
        .iter()
        .map(|b| Ok((b.label, residual(&y, b)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmin_label(scores.into_iter()))
}

/// Predictions for every sample and every basis size in `k_values`
/// (`result[i][j]` is the class of sample `j` using `k_values[i]` elements).
pub fn predict_sweep(
    samples: &[DenseTensor],
    bases: &[ClassBasis],
    k_values: &[usize],
) -> Result<Vec<Vec<usize>>> {
    if bases.is_empty() {
        return Err(Error::InvalidParameter("no class bases".into()));
    }
    let kmax = bases.iter().map(ClassBasis::k).min().unwrap_or(0);
    if let Some(&bad) = k_values.iter().find(|&&k| k == 0 || k > kmax) {
        return Err(Error::InvalidParameter(format!(
            "k = {bad} outside 1..={kmax}"
        )));
    }
    let profiles = samples
        .par_iter()
        .map(|s| {
            let y = normalize(s)?;
            bases
                .iter()
                .map(|b| Ok((b.label, residual_profile(&y, b)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(k_values
        .iter()
        .map(|&k| {
            profiles
                .iter()
                .map(|prof| argmin_label(prof.iter().map(|(l, r)| (*l, r[k - 1]))))
                .collect()
        })
        .collect())
}

/// One functional Tucker model per class, each fitted on that class's
/// normalized samples stacked along the leading mode.
///
/// `cfg.ranks` covers the stacked tensor: stacking-mode rank first,
/// continuous-mode rank last.
pub fn train_ftd(data: &LabeledDataset, cfg: &FtdConfig) -> Result<BTreeMap<usize, FtdModel>> {
    cfg.validate()?;
    if cfg.ranks.len() != data.sample_order() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for stacked order-{} class tensors",
            cfg.ranks.len(),
            data.sample_order() + 1
        )));
    }
    (0..data.num_classes())
        .into_par_iter()
        .map(|c| {
            let x = data.class_tensor(c)?;
            let model = ftd::fit(&x, cfg, &data.grid)?;
            log::debug!(
                "class {c}: {} sweeps, relative error {:.3e}",
                model.trace.len(),
                model.final_error().unwrap_or(f64::NAN)
            );
            Ok((c, model))
        })
        .collect()
}

/// Class bases on `new_grid`: each class model is reconstructed there and
/// decomposed exactly as raw class tensors are in [`train_hosvd`].
pub fn transfer_bases(
    models: &BTreeMap<usize, FtdModel>,
    new_grid: &DesignGrid,
    ranks: &[usize],
    k: usize,
) -> Result<Vec<ClassBasis>> {
    models
        .par_iter()
        .map(|(&c, m)| {
            let x = ftd::reconstruct_on(m, new_grid)?;
            bases_from_class_tensor(c, &x, ranks, k)
        })
        .collect()
}

/// Mean cross-validated accuracy for each (rank tuple, k) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CvTable {
    pub rank_grid: Vec<Vec<usize>>,
    pub k_values: Vec<usize>,
    /// `accuracy[i][j]` belongs to `rank_grid[i]` and `k_values[j]`.
    pub accuracy: Vec<Vec<f64>>,
}

impl CvTable {
    /// Rows are rank tuples, columns are k values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ranks");
        for k in &self.k_values {
            out.push_str(&format!(",k={k}"));
        }
        out.push('\n');
        for (ranks, row) in self.rank_grid.iter().zip(&self.accuracy) {
            out.push_str(&rank_label(ranks));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Heatmap for one k: rows are the leading rank components, columns the
    /// last component. Missing cells are left empty.
    pub fn heatmap_csv(&self, k: usize) -> Option<String> {
        let j = self.k_values.iter().position(|&v| v == k)?;
        let mut rows: Vec<Vec<usize>> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        for r in &self.rank_grid {
            let (head, last) = r.split_at(r.len() - 1);
            if !rows.iter().any(|h| h == head) {
                rows.push(head.to_vec());
            }
            if !cols.contains(&last[0]) {
                cols.push(last[0]);
            }
        }
        let mut out = String::from("ranks");
        for c in &cols {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for head in &rows {
            out.push_str(&rank_label(head));
            for c in &cols {
                out.push(',');
                if let Some(i) = self
                    .rank_grid
                    .iter()
                    .position(|r| r[..r.len() - 1] == head[..] && r[r.len() - 1] == *c)
                {
                    out.push_str(&self.accuracy[i][j].to_string());
                }
            }
            out.push('\n');
        }
        Some(out)
    }
}

fn rank_label(ranks: &[usize]) -> String {
    ranks
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// Stratified fold id for every sample: each class is shuffled with a
/// seeded generator and dealt round-robin over the folds.
pub fn stratified_folds(data: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; data.samples.len()];
    for c in 0..data.num_classes() {
        let mut idx = data.class_indices(c);
        if idx.len() < folds {
            return Err(Error::InvalidDataset(format!(
                "class '{}' has {} samples, fewer than {folds} folds",
                data.class_names[c],
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Stratified k-fold grid search over HOSVD ranks and basis sizes.
pub fn cross_validate(
    data: &LabeledDataset,
    rank_grid: &[Vec<usize>],
    k_values: &[usize],
    folds: usize,
    seed: u64,
) -> Result<CvTable> {
    if rank_grid.is_empty() || k_values.is_empty() {
        return Err(Error::InvalidParameter("empty rank grid or k list".into()));
    }
    for r in rank_grid {
        check_sample_ranks(data.sample_shape(), r)?;
    }
    let assignment = stratified_folds(data, folds, seed)?;
    let kmax = *k_values.iter().max().expect("non-empty");
    // smallest training class across folds
    let smallest_train = (0..data.num_classes())
        .map(|c| {
            let n = data.class_indices(c).len();
            n - n.div_ceil(folds)
        })
        .min()
        .unwrap_or(0);
    if k_values.contains(&0) || kmax >= smallest_train {
        return Err(Error::InvalidParameter(format!(
            "k values must satisfy 1 <= k < {smallest_train} (smallest training class)"
        )));
    }

    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = (0..assignment.len())
                .filter(|&i| assignment[i] != f)
                .collect();
            let test_idx: Vec<usize> = (0..assignment.len())
                .filter(|&i| assignment[i] == f)
                .collect();
            let train = data.subset(&train_idx)?;
            let test_samples: Vec<DenseTensor> =
                test_idx.iter().map(|&i| data.samples[i].clone()).collect();
            let truth: Vec<usize> = test_idx.iter().map(|&i| data.labels[i]).collect();
            rank_grid
                .iter()
                .map(|ranks| {
                    let bases = train_hosvd(&train, ranks, kmax)?;
                    let preds = predict_sweep(&test_samples, &bases, k_values)?;
                    preds
                        .iter()
                        .map(|p| crate::metrics::accuracy(&truth, p))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let accuracy = (0..rank_grid.len())
        .map(|i| {
            (0..k_values.len())
                .map(|j| per_fold.iter().map(|f| f[i][j]).sum::<f64>() / folds as f64)
                .collect()
        })
        .collect();
    Ok(CvTable {
        rank_grid: rank_grid.to_vec(),
        k_values: k_values.to_vec(),
        accuracy,
    })
}
