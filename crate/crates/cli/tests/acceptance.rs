//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --release --test acceptance` (the workspace profiles
//! already optimize test builds).

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ftucker::classify::{residual, ClassBasis};
use ftucker::datagen::{planted_ftd_instance, synth_digit_dataset, SynthConfig};
use ftucker::experiment::run_digits;
use ftucker::ftd::{fit, objective, reconstruct_on, solve_weights, AlsState};
use ftucker::io::{self, ExperimentConfig};
use ftucker::kernel::gram;
use ftucker::tensor::{inner, kronecker, norm, unfold};
use ftucker::tucker::{hosvd, relative_error, unfolding_via_kronecker};
use ftucker::{DenseTensor, DesignGrid, FtdConfig, FtdModel, KernelSpec, Matrix};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
    let len = shape.iter().product();
    DenseTensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn orthonormal(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    random_matrix(r, c, rng).qr().q()
}

/// 1. Objective non-increasing over sweeps on 100 random instances.
fn monotone_als() -> Outcome {
    let started = Instant::now();
    let lambdas = [1e-3, 1.0, 10.0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::NEG_INFINITY;
    let mut sweeps = 0;
    for i in 0..100 {
        let order = if i % 5 == 4 { 4 } else { 3 };
        let cap = if order == 4 { 6 } else { 12 };
        let shape: Vec<usize> = (0..order).map(|_| rng.random_range(2..=cap)).collect();
        let ranks: Vec<usize> = shape.iter().map(|&e| rng.random_range(1..=e.min(4))).collect();
        let t = random_tensor(shape.clone(), &mut rng);
        let grid = DesignGrid::uniform(0.0, 1.0, shape[order - 1]).unwrap();
        let mut cfg = FtdConfig::new(ranks, KernelSpec::gaussian(rng.random_range(0.1..0.5)).unwrap());
        cfg.lambda = lambdas[i % 3];
        cfg.seed = i as u64;
        let m = fit(&t, &cfg, &grid).unwrap();
        sweeps += m.objective_trace.len();
        for w in m.objective_trace.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 60.0,
        format!("max objective increase {worst:.2e} (limit 1e-9) over {sweeps} sweeps, {secs:.1}s (limit 60s)"),
    )
}

/// 2. solve_weights against the explicitly assembled regularized normal equations.
fn kronecker_oracle() -> Outcome {
    let started = Instant::now();
    let (m, n, p, q, r, s) = (3, 3, 4, 2, 2, 2);
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let t = random_tensor(vec![m, n, p], &mut rng);
        let core = random_tensor(vec![q, r, s], &mut rng);
        let a = orthonormal(m, q, &mut rng);
        let b = orthonormal(n, r, &mut rng);
        let grid = DesignGrid::uniform(1.0, 4.0, p).unwrap();
        let k = gram(&KernelSpec::gaussian(1.0).unwrap(), &grid);
        let lambda = rng.random_range(1e-3..1.0);
        let w = solve_weights(&t, &core, &[a.clone(), b.clone()], &k, lambda).unwrap();

        // X_(2) = K W G_(2) (B ⊗ A)ᵀ, so vec(X_(2)) = (Mᵀ ⊗ K) vec(W) with M = G_(2)(B ⊗ A)ᵀ
        let mm = unfold(&core, 2).unwrap() * kronecker(&b, &a).transpose();
        let j = kronecker(&mm.transpose(), &k);
        let tv = DVector::from_column_slice(unfold(&t, 2).unwrap().as_slice());
        let reg = kronecker(&Matrix::identity(s, s), &k) * lambda;
        let lhs = j.transpose() * &j + reg;
        let rhs = j.transpose() * tv;
        let oracle = lhs.lu().solve(&rhs).unwrap();
        let got = DVector::from_column_slice(w.as_slice());
        worst = worst.max((got - &oracle).norm() / oracle.norm());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 5.0,
        format!("max relative deviation {worst:.2e} (limit 1e-8) over 20 seeds, {secs:.2}s (limit 5s)"),
    )
}

/// 3. Finite-difference stationarity of the W block and normal-equation residuals.
fn stationarity() -> Outcome {
    let mut worst_grad: f64 = 0.0;
    let mut worst_normal: f64 = 0.0;
    for (seed, lambda) in [(0u64, 1e-3), (1, 1e-1), (2, 1.0), (3, 10.0)] {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let t = random_tensor(vec![6, 5, 8], &mut rng);
        let grid = DesignGrid::uniform(0.0, 1.0, 8).unwrap();
        let kernel = KernelSpec::gaussian(0.3).unwrap();
        let mut cfg = FtdConfig::new(vec![3, 2, 2], kernel);
        cfg.lambda = lambda;
        cfg.seed = seed;
        let mut st = AlsState::initialize(&t, &cfg, &grid).unwrap();
        for _ in 0..3 {
            for (i, rep) in st.sweep().unwrap().iter().enumerate() {
                // block order: discrete modes, W, core
                if i != 2 {
                    worst_normal = worst_normal.max(rep.normal_residual);
                }
            }
        }
        st.update_weights().unwrap();
        let f = |w: &Matrix| {
            let m = FtdModel::from_parts(
                st.core.clone(),
                st.discrete_factors.clone(),
                w.clone(),
                grid.clone(),
                kernel,
                lambda,
            )
            .unwrap();
            objective(&m, &t).unwrap()
        };
        let grad = |w0: &Matrix| {
            let h = 1e-6;
            DMatrix::from_fn(w0.nrows(), w0.ncols(), |i, j| {
                let mut wp = w0.clone();
                let mut wm = w0.clone();
                wp[(i, j)] += h;
                wm[(i, j)] -= h;
                (f(&wp) - f(&wm)) / (2.0 * h)
            })
        };
        let g = grad(&st.weights);
        let g0 = grad(&Matrix::zeros(st.weights.nrows(), st.weights.ncols()));
        worst_grad = worst_grad.max(g.norm() / g0.norm());
    }
    outcome(
        worst_grad <= 1e-5 && worst_normal <= 1e-6,
        format!(
            "relative W gradient {worst_grad:.2e} (limit 1e-5), discrete/core normal residual {worst_normal:.2e} (limit 1e-6)"
        ),
    )
}

/// 4. Closed-form residual against the explicit projection residual.
fn residual_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let shape: Vec<usize> = (0..rng.random_range(2..=3)).map(|_| rng.random_range(2..=6)).collect();
        let len: usize = shape.iter().product();
        let k = rng.random_range(1..=len.min(6));
        let q = orthonormal(len, k, &mut rng);
        let elements: Vec<DenseTensor> = (0..k)
            .map(|j| DenseTensor::new(shape.clone(), q.column(j).iter().copied().collect()).unwrap())
            .collect();
        let basis = ClassBasis { label: 0, elements };
        let y = random_tensor(shape.clone(), &mut rng);
        let y = y.scale(1.0 / norm(&y));
        let yv = DVector::from_column_slice(y.data());
        let alpha = q.clone().svd(true, true).solve(&yv, 1e-14).unwrap();
        let explicit = (&yv - &q * alpha).norm_squared();
        worst = worst.max((residual(&y, &basis).unwrap() - explicit).abs());
    }
    outcome(worst <= 1e-10, format!("max |closed form - projection| {worst:.2e} (limit 1e-10) on 100 bases"))
}

/// 5. Planted instances are recovered.
fn exact_recovery() -> Outcome {
    let grid = DesignGrid::uniform(1.0, 10.0, 50).unwrap();
    let kernel = KernelSpec::gaussian(4.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut max_sweeps = 0;
    for seed in 0..10 {
        let (t, _) = planted_ftd_instance(&[16, 16, 50], &[5, 5, 2], kernel, &grid, seed).unwrap();
        let mut cfg = FtdConfig::new(vec![5, 5, 2], kernel);
        cfg.lambda = 1e-8;
        cfg.max_iters = 200;
        cfg.seed = seed;
        let m = fit(&t, &cfg, &grid).unwrap();
        worst = worst.max(m.final_error().unwrap());
        max_sweeps = max_sweeps.max(m.trace.len());
    }
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} (limit 1e-4), at most {max_sweeps} sweeps, 10 seeds"),
    )
}

/// 6. Interpolation from every 4th grid point to the held-out points.
fn interpolation() -> Outcome {
    let grid = DesignGrid::uniform(1.0, 10.0, 50).unwrap();
    let train: Vec<usize> = (0..50).step_by(4).collect();
    let held: Vec<usize> = (0..50).filter(|i| i % 4 != 0).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for b in [2.0, 3.0, 4.0] {
        let kernel = KernelSpec::gaussian(b).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..3 {
            let (t, _) = planted_ftd_instance(&[16, 16, 50], &[5, 5, 2], kernel, &grid, 50 + seed).unwrap();
            let mut cfg = FtdConfig::new(vec![5, 5, 2], kernel);
            cfg.lambda = 1e-8;
            cfg.seed = seed;
            let m = fit(&t.select(2, &train).unwrap(), &cfg, &grid.subset(&train).unwrap()).unwrap();
            let full = reconstruct_on(&m, &grid).unwrap();
            let th = t.select(2, &held).unwrap();
            let rh = full.select(2, &held).unwrap();
            worst = worst.max(norm(&th.sub(&rh).unwrap()) / norm(&th));
        }
        pass &= worst <= 0.05;
        parts.push(format!("d={b}: {worst:.2e}"));
    }
    outcome(pass, format!("held-out relative error {} (limit 0.05)", parts.join(", ")))
}

/// 7. Equal-domain parity and transfer-domain gap on the digit experiment.
fn transfer_experiment() -> Outcome {
    let started = Instant::now();
    let mut passing = 0;
    let mut lines = Vec::new();
    for seed in 0..10 {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        let r = run_digits(&cfg).unwrap();
        let eq_acc = (r.equal_accuracy.mean_ftd() - r.equal_accuracy.mean_hosvd()).abs();
        let eq_f1 = (r.equal_macro_f1.mean_ftd() - r.equal_macro_f1.mean_hosvd()).abs();
        let tr_acc = r.transfer_accuracy.mean_ftd() - r.transfer_accuracy.mean_hosvd();
        let tr_f1 = r.transfer_macro_f1.mean_ftd() - r.transfer_macro_f1.mean_hosvd();
        let ok = eq_acc <= 0.10 && eq_f1 <= 0.10 && tr_acc >= 0.15 && tr_f1 >= 0.15;
        passing += ok as usize;
        lines.push(format!(
            "    seed {seed}: equal |dacc| {eq_acc:.3} |dF1| {eq_f1:.3}; transfer dacc {tr_acc:.3} dF1 {tr_f1:.3} [{}]",
            if ok { "ok" } else { "miss" }
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    for l in &lines {
        println!("{l}");
    }
    outcome(
        passing >= 9 && secs < 600.0,
        format!("{passing}/10 seeds meet all four conditions (need 9), {secs:.0}s (limit 600s)"),
    )
}

/// 8. HOSVD reconstruction, Kronecker-form unfoldings and all-orthogonality.
fn hosvd_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut rec, mut kron, mut orth): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for shape in [vec![4, 5, 6], vec![3, 4, 2, 5], vec![7, 3, 4]] {
        let t = random_tensor(shape.clone(), &mut rng);
        let f = hosvd(&t, &shape).unwrap();
        rec = rec.max(relative_error(&t, &f).unwrap());
        for mode in 0..shape.len() {
            let seq = unfold(&t, mode).unwrap();
            let kr = unfolding_via_kronecker(&f, mode).unwrap();
            kron = kron.max((&seq - &kr).norm() / seq.norm());
            let n = f.core.shape()[mode];
            let slices: Vec<_> = (0..n).map(|i| f.core.select(mode, &[i]).unwrap()).collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    orth = orth.max(inner(&slices[i], &slices[j]).unwrap().abs());
                }
            }
        }
    }
    outcome(
        rec <= 1e-9 && kron <= 1e-10 && orth <= 1e-9,
        format!("reconstruction {rec:.2e} (1e-9), Kronecker vs sequential {kron:.2e} (1e-10), slice inner products {orth:.2e} (1e-9)"),
    )
}

fn ftucker(args: &[&str]) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_ftucker"))
        .args(args)
        .env("FTUCKER_THREADS", "2")
        .output()
        .expect("run ftucker");
    (out.status.success(), out.stdout)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// Runs every command into `root` and returns stdout of each.
fn cli_session(root: &Path) -> Result<Vec<Vec<u8>>, String> {
    let r = |p: &str| root.join(p).display().to_string();
    std::fs::create_dir_all(root).unwrap();
    std::fs::write(root.join("ranks.json"), "[[3,3,2],[2,2,2]]").unwrap();
    let small = ExperimentConfig {
        ranks: vec![3, 3, 2],
        k_values: (1..=4).collect(),
        max_iters: 15,
        dataset: SynthConfig {
            num_classes: 3,
            samples_per_class: 12,
            image_size: (8, 8),
            ..SynthConfig::default()
        },
        ..ExperimentConfig::default()
    };
    std::fs::write(root.join("exp.json"), serde_json::to_string(&small).unwrap()).unwrap();
    let manifest = r("data/manifest.json");
    let sample = r("data/samples/00000_c0.dtf");
    let runs: Vec<Vec<String>> = vec![
        vec!["synth", "--classes", "3", "--per-class", "8", "--size", "8", "--p", "20", "--seed", "7", "--out", &r("data")],
        vec!["decompose", "--method", "hosvd", "--ranks", "4,4,3", "--in", &sample, "--out", &r("hosvd.json")],
        vec!["decompose", "--method", "ftd", "--ranks", "3,3,2", "--lambda", "0.1", "--max-iters", "20", "--seed", "3", "--in", &sample, "--grid-file", &manifest, "--out", &r("ftd.json"), "--trace-out", &r("trace.csv")],
        vec!["interpolate", "--model", &r("ftd.json"), "--points", "1,1.5,2,7.25", "--out", &r("interp.dtf"), "--fiber", "1,2"],
        vec!["classify", "train", "--method", "ftd", "--ranks", "3,3,2", "--k", "3", "--train-grid-idx", "0-19:2", "--lambda", "1", "--max-iters", "15", "--manifest", &manifest, "--model-dir", &r("ftd_model")],
        vec!["classify", "predict", "--model-dir", &r("ftd_model"), "--manifest", &manifest, "--test-grid-idx", "0-9", "--out", &r("pred.csv")],
        vec!["classify", "train", "--method", "hosvd", "--ranks", "3,3,2", "--k", "3", "--train-grid-idx", "0-19:2", "--manifest", &manifest, "--model-dir", &r("hosvd_model")],
        vec!["classify", "eval", "--model-dir", &r("hosvd_model"), "--manifest", &manifest, "--test-grid-idx", "0-19:2", "--metrics-out", &r("metrics.json"), "--curve-out", &r("curve.csv")],
        vec!["cv", "--manifest", &manifest, "--folds", "4", "--rank-grid", &r("ranks.json"), "--k-list", "1-2", "--seed", "5", "--out", &r("cv")],
        vec!["experiment", "digits", "--seed", "2", "--config", &r("exp.json"), "--out-dir", &r("exp")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let mut stdouts = Vec::new();
    for args in runs {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let (ok, stdout) = ftucker(&refs);
        if !ok {
            return Err(format!("`ftucker {}` failed", args[..2].join(" ")));
        }
        // the synth report names the output directory, which differs per session
        if args[0] != "synth" {
            stdouts.push(stdout);
        }
    }
    Ok(stdouts)
}

/// 9. Byte-identical outputs across two runs of every command.
fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let (sa, sb) = match (cli_session(&a), cli_session(&b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let fa = snapshot(&a);
    let fb = snapshot(&b);
    let names = |f: &[(String, Vec<u8>)]| f.iter().map(|e| e.0.clone()).collect::<Vec<_>>();
    if names(&fa) != names(&fb) {
        return outcome(false, "the two sessions produced different file sets".into());
    }
    let mut differing: Vec<String> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.clone())
        .collect();
    if sa != sb {
        differing.push("stdout".into());
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files and {} stdout streams identical across two runs", fa.len(), sa.len())
        } else {
            format!("differences in {}", differing.join(", "))
        },
    )
}

/// 10. Declared non-reproducible; the manifest ingestion path is exercised instead.
fn ingestion_path() -> Outcome {
    let cfg = SynthConfig {
        num_classes: 2,
        samples_per_class: 5,
        image_size: (4, 4),
        p: 9,
        ..SynthConfig::default()
    };
    let data = synth_digit_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = io::save_dataset(&data, dir.path()).unwrap();
    let back = io::load_dataset(&manifest).unwrap();
    outcome(
        back == data,
        "declared not reproducible at desk scale (real-data results need the external datasets); \
         dataset manifest round-trip verified as the ingestion path"
            .into(),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("ALS monotonicity", monotone_als),
        ("Kronecker-oracle equivalence", kronecker_oracle),
        ("stationarity / gradient check", stationarity),
        ("residual identity", residual_identity),
        ("exact recovery", exact_recovery),
        ("interpolation", interpolation),
        ("domain-transfer experiment", transfer_experiment),
        ("HOSVD correctness", hosvd_correctness),
        ("CLI determinism", cli_determinism),
        ("real-data results", ingestion_path),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let elapsed = Duration::from_secs_f64(t.elapsed().as_secs_f64());
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            elapsed.as_secs_f64()
        );
        failed += !o.pass as usize;
    }
    println!(
        "acceptance: {} failed, total {:.0}s",
        failed,
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
