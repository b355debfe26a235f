use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ftucker::classify::{
    cross_validate, predict_sweep, train_ftd, train_hosvd, transfer_bases, ClassBasis,
    LabeledDataset,
};
use ftucker::datagen::{subsample, synth_digit_dataset, SynthConfig};
use ftucker::experiment::run_digits;
use ftucker::ftd::{self, FtdConfig};
use ftucker::io::{self, BasisSet, ExperimentConfig, SavedModel};
use ftucker::metrics::{accuracy, macro_f1, MetricsReport};
use ftucker::tucker::{hosvd, relative_error};
use ftucker::{DesignGrid, FtdModel, KernelSpec};

use crate::parse;
use crate::{
    CvArgs, DecomposeArgs, DigitsArgs, EvalArgs, FtdFlags, InterpolateArgs, Method, PredictArgs,
    SynthArgs, TrainArgs,
};

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn ftd_config(ranks: Vec<usize>, f: &FtdFlags) -> Result<FtdConfig> {
    let mut cfg = FtdConfig::new(ranks, KernelSpec::gaussian(f.bandwidth)?);
    cfg.lambda = f.lambda;
    cfg.tol = f.tau;
    cfg.max_iters = f.max_iters;
    cfg.seed = f.seed;
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let range = parse::floats(&a.grid_range)?;
    if range.len() != 2 {
        bail!("--grid-range takes two values, lo,hi");
    }
    let cfg = SynthConfig {
        num_classes: a.classes,
        samples_per_class: a.per_class,
        image_size: parse::image_size(&a.size)?,
        p: a.p,
        knot_count: a.knots,
        noise_std: a.noise,
        seed: a.seed,
        grid_range: (range[0], range[1]),
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let data = synth_digit_dataset(&cfg)?;
    let manifest = io::save_dataset(&data, &a.out)?;
    print_json(&json!({
        "manifest": manifest.display().to_string(),
        "samples": data.samples.len(),
        "classes": data.num_classes(),
        "sample_shape": data.sample_shape(),
    }))
}

/// Grid from a comma list, a JSON array file, or a manifest's `grid` field.
fn load_grid(points: Option<&str>, file: Option<&Path>) -> Result<Option<DesignGrid>> {
    let values = match (points, file) {
        (Some(p), _) => parse::floats(p)?,
        (None, Some(f)) => {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let arr = v.get("grid").cloned().unwrap_or(v);
            serde_json::from_value::<Vec<f64>>(arr)
                .context("grid file must hold a JSON array of numbers or a manifest")?
        }
        (None, None) => return Ok(None),
    };
    Ok(Some(DesignGrid::new(values)?))
}

pub fn decompose(a: &DecomposeArgs) -> Result<()> {
    let ranks = parse::indices(&a.ranks)?;
    let t = io::read_tensor(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    match a.method {
        Method::Hosvd => {
            let f = hosvd(&t, &ranks)?;
            let err = relative_error(&t, &f)?;
            io::save_model(&a.out, &SavedModel::Hosvd(f))?;
            print_json(&json!({ "method": "hosvd", "relative_error": err }))
        }
        Method::Ftd => {
            let cfg = ftd_config(ranks, &a.ftd)?;
            let p = *t.shape().last().expect("non-empty shape");
            let grid = match load_grid(a.grid.as_deref(), a.grid_file.as_deref())? {
                Some(g) => g,
                None => DesignGrid::uniform(1.0, 10.0, p)?,
            };
            let model = ftd::fit(&t, &cfg, &grid)?;
            if let Some(path) = &a.trace_out {
                let mut csv = String::from("sweep,relative_error,objective\n");
                for (i, (e, o)) in model.trace.iter().zip(&model.objective_trace).enumerate() {
                    csv.push_str(&format!("{},{e},{o}\n", i + 1));
                }
                write(path, &csv)?;
            }
            let out = json!({
                "method": "ftd",
                "relative_error": model.final_error(),
                "sweeps": model.trace.len(),
                "converged": model.converged,
            });
            io::save_model(&a.out, &SavedModel::Ftd(model))?;
            print_json(&out)
        }
    }
}

fn load_ftd(path: &Path) -> Result<FtdModel> {
    match io::load_model(path).with_context(|| format!("reading {}", path.display()))? {
        SavedModel::Ftd(m) => Ok(m),
        SavedModel::Hosvd(_) => bail!(
            "{} holds an HOSVD model; interpolation needs an FTD model",
            path.display()
        ),
    }
}

pub fn interpolate(a: &InterpolateArgs) -> Result<()> {
    let model = load_ftd(&a.model)?;
    let grid = load_grid(a.points.as_deref(), a.grid_file.as_deref())?
        .context("give --points or --grid-file")?;
    let x = ftd::reconstruct_on(&model, &grid)?;
    io::write_tensor(&a.out, &x)?;
    if let Some(f) = &a.fiber {
        let idx = parse::indices(f)?;
        let d = x.order() - 1;
        if idx.len() != d {
            bail!("--fiber needs {d} indices, got {}", idx.len());
        }
        if let Some((m, (&i, &e))) = idx
            .iter()
            .zip(x.shape())
            .enumerate()
            .find(|(_, (&i, &e))| i >= e)
        {
            bail!("fiber index {i} out of range for mode {m} of extent {e}");
        }
        let mut ix = idx.clone();
        ix.push(0);
        let mut csv = String::from("x,value\n");
        for (j, pt) in grid.points().iter().enumerate() {
            ix[d] = j;
            csv.push_str(&format!("{pt},{}\n", x.get(&ix)));
        }
        let path = a
            .fiber_out
            .clone()
            .unwrap_or_else(|| a.out.with_extension("csv"));
        write(&path, &csv)?;
    }
    print_json(&json!({ "points": grid.len(), "shape": x.shape() }))
}

/// Contents of `meta.json` in a classifier directory.
#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    method: String,
    ranks: Vec<usize>,
    k: usize,
    class_names: Vec<String>,
    train_grid: DesignGrid,
}

fn load_manifest(path: &Path) -> Result<LabeledDataset> {
    io::load_dataset(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn select_grid(data: &LabeledDataset, idx: Option<&str>) -> Result<LabeledDataset> {
    match idx {
        None => Ok(data.clone()),
        Some(s) => Ok(subsample(data, &parse::indices(s)?)?),
    }
}

fn model_path(dir: &Path, c: usize) -> PathBuf {
    dir.join(format!("class_{c:03}.json"))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let ranks = parse::indices(&a.ranks)?;
    let data = select_grid(&load_manifest(&a.manifest)?, a.train_grid_idx.as_deref())?;
    fs::create_dir_all(&a.model_dir)?;
    let smallest = (0..data.num_classes())
        .map(|c| data.class_indices(c).len())
        .min()
        .unwrap_or(0);
    if a.k == 0 || a.k >= smallest {
        bail!("--k must satisfy 1 <= k < {smallest} (smallest class size)");
    }
    match a.method {
        Method::Hosvd => {
            let bases = train_hosvd(&data, &ranks, a.k)?;
            io::save_bases(
                &a.model_dir.join("bases.json"),
                &BasisSet {
                    method: "hosvd".into(),
                    ranks: ranks.clone(),
                    grid: data.grid.clone(),
                    class_names: data.class_names.clone(),
                    bases,
                },
            )?;
        }
        Method::Ftd => {
            let spatial: usize = ranks.iter().product();
            let mut full = vec![smallest.min(spatial)];
            full.extend_from_slice(&ranks);
            let cfg = ftd_config(full, &a.ftd)?;
            let models = train_ftd(&data, &cfg)?;
            for (c, m) in models {
                io::save_model(&model_path(&a.model_dir, c), &SavedModel::Ftd(m))?;
            }
        }
    }
    let meta = ClassifierMeta {
        method: a.method.name().into(),
        ranks,
        k: a.k,
        class_names: data.class_names.clone(),
        train_grid: data.grid.clone(),
    };
    write(
        &a.model_dir.join("meta.json"),
        &(serde_json::to_string_pretty(&meta)? + "\n"),
    )?;
    print_json(&json!({
        "method": meta.method,
        "classes": meta.class_names.len(),
        "train_samples": data.samples.len(),
        "k": a.k,
    }))
}

/// Bases for the test grid, plus the trained class names.
fn bases_for(dir: &Path, test: &LabeledDataset) -> Result<(Vec<ClassBasis>, ClassifierMeta)> {
    let text = fs::read_to_string(dir.join("meta.json"))
        .with_context(|| format!("{} is not a trained classifier directory", dir.display()))?;
    let meta: ClassifierMeta = serde_json::from_str(&text)?;
    if meta.class_names != test.class_names {
        bail!(
            "manifest classes {:?} differ from trained classes {:?}",
            test.class_names,
            meta.class_names
        );
    }
    let bases = match meta.method.as_str() {
        "hosvd" => {
            let set = io::load_bases(&dir.join("bases.json"))?;
            if set.grid.len() != test.grid.len() {
                bail!(
                    "HOSVD bases were built on {} grid points but the test data has {}",
                    set.grid.len(),
                    test.grid.len()
                );
            }
            if set.grid != test.grid {
                log::warn!("test grid differs from the training grid; HOSVD compares by position");
            }
            set.bases
        }
        "ftd" => {
            let mut models = BTreeMap::new();
            for c in 0..meta.class_names.len() {
                models.insert(c, load_ftd(&model_path(dir, c))?);
            }
            transfer_bases(&models, &test.grid, &meta.ranks, meta.k)?
        }
        other => bail!("unknown method '{other}' in meta.json"),
    };
    Ok((bases, meta))
}

fn chosen_k(k: Option<usize>, max: usize) -> Result<usize> {
    let k = k.unwrap_or(max);
    if k == 0 || k > max {
        bail!("--k must lie in 1..={max}");
    }
    Ok(k)
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let test = select_grid(&load_manifest(&a.manifest)?, a.test_grid_idx.as_deref())?;
    let (bases, meta) = bases_for(&a.model_dir, &test)?;
    let k = chosen_k(a.k, meta.k)?;
    let preds = &predict_sweep(&test.samples, &bases, &[k])?[0];
    let mut csv = String::from("sample,predicted\n");
    for (i, p) in preds.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", meta.class_names[*p]));
    }
    match &a.out {
        Some(path) => write(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let p = &a.predict;
    let test = select_grid(&load_manifest(&p.manifest)?, p.test_grid_idx.as_deref())?;
    let (bases, meta) = bases_for(&p.model_dir, &test)?;
    let k = chosen_k(p.k, meta.k)?;
    let ks: Vec<usize> = (1..=meta.k).collect();
    let sweep = predict_sweep(&test.samples, &bases, &ks)?;
    let c = test.num_classes();
    let report = MetricsReport::compute(&test.labels, &sweep[k - 1], c)?;
    if let Some(path) = &a.curve_out {
        let mut csv = String::from("k,accuracy,macro_f1\n");
        for (kk, pred) in ks.iter().zip(&sweep) {
            csv.push_str(&format!(
                "{kk},{},{}\n",
                accuracy(&test.labels, pred)?,
                macro_f1(&test.labels, pred, c)?
            ));
        }
        write(path, &csv)?;
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(path) = &a.metrics_out {
        write(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

pub fn cv(a: &CvArgs) -> Result<()> {
    let data = load_manifest(&a.manifest)?;
    let text = fs::read_to_string(&a.rank_grid)
        .with_context(|| format!("reading {}", a.rank_grid.display()))?;
    let grid: Vec<Vec<usize>> =
        serde_json::from_str(&text).context("rank grid must be a JSON list of rank lists")?;
    let k_values = parse::indices(&a.k_list)?;
    let table = cross_validate(&data, &grid, &k_values, a.folds, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write(&a.out.join("cv.csv"), &table.to_csv())?;
    for &k in &k_values {
        if let Some(h) = table.heatmap_csv(k) {
            write(&a.out.join(format!("heatmap_k{k}.csv")), &h)?;
        }
    }
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (i, row) in table.accuracy.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > best.2 {
                best = (i, j, v);
            }
        }
    }
    print_json(&json!({
        "folds": a.folds,
        "best_ranks": table.rank_grid[best.0],
        "best_k": table.k_values[best.1],
        "best_accuracy": best.2,
    }))
}

pub fn digits(a: &DigitsArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).context("invalid experiment config")?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let report = run_digits(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    for (name, csv) in report.csv_files() {
        write(&a.out_dir.join(name), &csv)?;
    }
    let means = json!({
        "equal_accuracy": { "hosvd": report.equal_accuracy.mean_hosvd(), "ftd": report.equal_accuracy.mean_ftd() },
        "equal_macro_f1": { "hosvd": report.equal_macro_f1.mean_hosvd(), "ftd": report.equal_macro_f1.mean_ftd() },
        "transfer_accuracy": { "hosvd": report.transfer_accuracy.mean_hosvd(), "ftd": report.transfer_accuracy.mean_ftd() },
        "transfer_macro_f1": { "hosvd": report.transfer_macro_f1.mean_hosvd(), "ftd": report.transfer_macro_f1.mean_ftd() },
    });
    let summary = json!({ "means": means, "report": report });
    write(
        &a.out_dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    print_json(&means)
}
