//! Seeded generators: the continuous-mode digit-like dataset and planted
//! functional Tucker instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classify::LabeledDataset;
use crate::error::{Error, Result};
use crate::ftd::FtdModel;
use crate::kernel::{gram, DesignGrid, KernelSpec};
use crate::linalg::orthonormalize;
use crate::tensor::{DenseTensor, Matrix};

/// Natural cubic interpolating spline.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::InvalidParameter(
                "spline needs at least two knots with matching values".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system
            let k = n - 2;
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { xs, ys, m })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let seg = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let (x0, x1) = (self.xs[seg], self.xs[seg + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - x) / h, (x - x0) / h);
        a * self.ys[seg]
            + b * self.ys[seg + 1]
            + ((a * a * a - a) * self.m[seg] + (b * b * b - b) * self.m[seg + 1]) * h * h / 6.0
    }
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Two smooth class curves evaluated on `grid`: natural cubic splines through
/// `knot_count` uniform random values from `value_range`, with knots equally
/// spaced over the grid's span. The pair is redrawn until the vectors are at
/// least 1e-3 rad apart (at most 100 draws).
pub fn smooth_curves(
    class_seed: u64,
    knot_count: usize,
    value_range: (f64, f64),
    grid: &DesignGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if knot_count < 4 {
        return Err(Error::InvalidParameter(
            "need at least 4 spline knots".into(),
        ));
    }
    let (lo, hi) = value_range;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "empty value range ({lo}, {hi})"
        )));
    }
    let pts = grid.points();
    let start = pts[0];
    let end = if pts.len() > 1 {
        pts[pts.len() - 1]
    } else {
        start + 1.0
    };
    let step = (end - start) / (knot_count - 1) as f64;
    let knots: Vec<f64> = (0..knot_count).map(|i| start + step * i as f64).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(class_seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        let values = (0..knot_count).map(|_| rng.random_range(lo..hi)).collect();
        let spline = NaturalCubicSpline::new(knots.clone(), values)?;
        Ok(pts.iter().map(|&x| spline.eval(x)).collect())
    };
    let mut pair = (draw(&mut rng)?, draw(&mut rng)?);
    for _ in 1..100 {
        if angle_between(&pair.0, &pair.1) >= 1e-3 {
            break;
        }
        pair = (draw(&mut rng)?, draw(&mut rng)?);
    }
    Ok(pair)
}

/// Parameters of the digit-like synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub image_size: (usize, usize),
    pub p: usize,
    pub knot_count: usize,
    pub value_range: (f64, f64),
    pub noise_std: f64,
    pub seed: u64,
    /// Coordinates of the first and last grid point.
    pub grid_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            samples_per_class: 48,
            image_size: (16, 16),
            p: 50,
            knot_count: 10,
            value_range: (1.0, 10.0),
            noise_std: 0.05,
            seed: 0,
            grid_range: (1.0, 10.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.num_classes == 0 {
            return bad("num_classes must be positive");
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive");
        }
        if self.image_size.0 < 2 || self.image_size.1 == 0 {
            return bad("image needs at least 2 rows and 1 column");
        }
        if self.p == 0 {
            return bad("grid size must be positive");
        }
        if self.knot_count < 4 {
            return bad("knot_count must be at least 4");
        }
        if !(self.value_range.0 < self.value_range.1) {
            return bad("value_range must satisfy lo < hi");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if !(self.grid_range.0 < self.grid_range.1) {
            return bad("grid_range must be increasing");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<DesignGrid> {
        DesignGrid::uniform(self.grid_range.0, self.grid_range.1, self.p)
    }
}

/// Class template: a sum of three broad Gaussian bumps near the image
/// centre (h × w, column-major), so classes overlap spatially.
fn class_template(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let ci = rng.random_range(0.3..0.7) * (h - 1) as f64;
            let cj = rng.random_range(0.3..0.7) * (w.max(2) - 1) as f64;
            let sigma = rng.random_range(0.25..0.4) * h.max(w) as f64;
            let amp = rng.random_range(0.5..1.0);
            (ci, cj, sigma, amp)
        })
        .collect();
    let mut img = vec![0.0; h * w];
    for j in 0..w {
        for i in 0..h {
            img[i + h * j] = bumps
                .iter()
                .map(|&(ci, cj, s, a)| {
                    let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    a * (-d2 / (2.0 * s * s)).exp()
                })
                .sum();
        }
    }
    img
}

/// Expands an image by the continuous mode: rows in the upper half follow
/// `upper`, rows in the lower half follow `lower`.
pub fn expand_image(
    img: &[f64],
    h: usize,
    w: usize,
    lower: &[f64],
    upper: &[f64],
) -> Result<DenseTensor> {
    if img.len() != h * w || lower.len() != upper.len() {
        return Err(Error::DimensionMismatch(
            "image or curve sizes disagree".into(),
        ));
    }
    let p = lower.len();
    let half = h / 2;
    let mut data = vec![0.0; h * w * p];
    for t in 0..p {
        for j in 0..w {
            for i in 0..h {
                let curve = if i < half { upper[t] } else { lower[t] };
                data[i + h * (j + w * t)] = img[i + h * j] * curve;
            }
        }
    }
    DenseTensor::new(vec![h, w, p], data)
}

/// Digit-like dataset with a continuous third mode.
///
/// Every class gets a smooth random template image and two class curves;
/// each sample is the template plus i.i.d. Gaussian pixel noise, expanded by
/// its class curves (upper half × upper curve + lower half × lower curve).
pub fn synth_digit_dataset(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let (h, w) = cfg.image_size;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut samples = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    let mut labels = Vec::with_capacity(samples.capacity());
    for class in 0..cfg.num_classes {
        let template_seed: u64 = master.random();
        let curve_seed: u64 = master.random();
        let noise_seed: u64 = master.random();
        let template = class_template(h, w, &mut ChaCha8Rng::seed_from_u64(template_seed));
        let (lower, upper) = smooth_curves(curve_seed, cfg.knot_count, cfg.value_range, &grid)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for _ in 0..cfg.samples_per_class {
            let img: Vec<f64> = if cfg.noise_std > 0.0 {
                template
                    .iter()
                    .map(|v| v + noise.sample(&mut noise_rng))
                    .collect()
            } else {
                template.clone()
            };
            samples.push(expand_image(&img, h, w, &lower, &upper)?);
            labels.push(class);
        }
    }
    let names = (0..cfg.num_classes).map(|c| c.to_string()).collect();
    LabeledDataset::new(samples, labels, names, grid)
}

/// Restricts every sample (and the grid) to the listed continuous-mode indices.
pub fn subsample(data: &LabeledDataset, indices: &[usize]) -> Result<LabeledDataset> {
    if indices.is_empty() {
        return Err(Error::InvalidParameter("empty grid index list".into()));
    }
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "grid indices must be strictly increasing".into(),
        ));
    }
    let p = data.grid.len();
    if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
        return Err(Error::InvalidParameter(format!(
            "grid index {bad} out of range for {p} points"
        )));
    }
    let grid = data.grid.subset(indices)?;
    let mode = data.sample_order() - 1;
    let samples = data
        .samples
        .iter()
        .map(|s| s.select(mode, indices))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, data.labels.clone(), data.class_names.clone(), grid)
}

/// Stratified seeded split; each class keeps `floor(fraction·n)` samples for
/// training (clamped to `1..n−1`) and the rest for testing.
pub fn split_train_test(
    data: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..data.num_classes() {
        let mut idx = data.class_indices(c);
        let n = idx.len();
        if n < 2 {
            return Err(Error::InvalidDataset(format!(
                "class '{}' has {n} sample(s); at least 2 are needed to split",
                data.class_names[c]
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
        let (a, b) = idx.split_at(n_train);
        train.extend_from_slice(a);
        test.extend_from_slice(b);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train)?, data.subset(&test)?))
}

/// Exact tensor `G ×₀ A₀ … ×_d (K·W)` from random orthonormal discrete
/// factors, Gaussian core and Gaussian weights, together with its model.
pub fn planted_ftd_instance(
    shape: &[usize],
    ranks: &[usize],
    kernel: KernelSpec,
    grid: &DesignGrid,
    seed: u64,
) -> Result<(DenseTensor, FtdModel)> {
    if shape.len() < 2 || ranks.len() != shape.len() {
        return Err(Error::DimensionMismatch(format!(
            "shape {shape:?} and ranks {ranks:?} are incompatible"
        )));
    }
    for (mode, (&r, &e)) in ranks.iter().zip(shape).enumerate() {
        if r == 0 || r > e {
            return Err(Error::RankOutOfRange {
                mode,
                rank: r,
                max: e,
            });
        }
    }
    let d = shape.len() - 1;
    if shape[d] != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "continuous extent {} but {} grid points",
            shape[d],
            grid.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let factors: Vec<Matrix> = (0..d)
        .map(|k| orthonormalize(&Matrix::from_fn(shape[k], ranks[k], |_, _| normal())))
        .collect();
    let core = DenseTensor::from_fn(ranks.to_vec(), |_| normal())?;
    let k = gram(&kernel, grid);
    // scale W so that the functional factor has unit-order columns
    let mut w = Matrix::from_fn(grid.len(), ranks[d], |_, _| normal());
    let c = &k * &w;
    for j in 0..w.ncols() {
        let n = c.column(j).norm() / (grid.len() as f64).sqrt();
        if n > 0.0 {
            w.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let model = FtdModel::from_parts(core, factors, w, grid.clone(), kernel, 1e-8)?;
    let t = model.reconstruct()?;
    Ok((t, model))
}
