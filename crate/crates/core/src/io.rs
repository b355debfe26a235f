//! File formats: DTF1 tensor files, dataset manifests, model and basis
//! files, experiment configuration.
//!
//! A DTF1 file is the 4 magic bytes `DTF1`, the order as one byte, one
//! little-endian `u64` per extent, then the column-major `f64` payload in
//! little-endian byte order. Model and basis files are JSON documents that
//! embed their arrays as base64-encoded DTF1 blocks.

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassBasis, LabeledDataset};
use crate::error::{Error, Result};
use crate::ftd::{FtdConfig, FtdModel, StopRule};
use crate::kernel::{DesignGrid, KernelSpec};
use crate::tensor::{DenseTensor, Matrix};
use crate::tucker::TuckerFactors;

pub const MAGIC: &[u8; 4] = b"DTF1";

pub fn encode_tensor(t: &DenseTensor) -> Result<Vec<u8>> {
    let order = u8::try_from(t.order())
        .map_err(|_| Error::Format(format!("order {} does not fit the header", t.order())))?;
    let mut out = Vec::with_capacity(5 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(order);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<DenseTensor> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing DTF1 magic".into()));
    }
    let order = bytes[4] as usize;
    let header = 5 + 8 * order;
    if bytes.len() < header {
        return Err(Error::Format("truncated DTF1 header".into()));
    }
    let shape: Vec<usize> = bytes[5..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Format("DTF1 extents overflow".into()))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != len.checked_mul(8) {
        return Err(Error::Format(format!(
            "DTF1 payload has {} bytes, header implies {len} values",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseTensor::new(shape, data)
}

pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<()> {
    fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    decode_tensor(&fs::read(path)?)
}

fn tensor_b64(t: &DenseTensor) -> Result<String> {
    Ok(B64.encode(encode_tensor(t)?))
}

fn tensor_from_b64(s: &str) -> Result<DenseTensor> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Format(format!("bad base64 block: {e}")))?;
    decode_tensor(&bytes)
}

fn matrix_b64(m: &Matrix) -> Result<String> {
    tensor_b64(&DenseTensor::new(
        vec![m.nrows(), m.ncols()],
        m.as_slice().to_vec(),
    )?)
}

fn matrix_from_b64(s: &str) -> Result<Matrix> {
    let t = tensor_from_b64(s)?;
    if t.order() != 2 {
        return Err(Error::Format(format!(
            "expected a matrix block, found order {}",
            t.order()
        )));
    }
    let (r, c) = (t.shape()[0], t.shape()[1]);
    Ok(Matrix::from_vec(r, c, t.into_data()))
}

/// `{ "grid": [...], "classes": [ { "label": "...", "samples": [...] } ] }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub grid: Vec<f64>,
    pub classes: Vec<ManifestClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestClass {
    pub label: String,
    /// Tensor-file paths, relative to the manifest's directory unless absolute.
    pub samples: Vec<String>,
}

/// Reads a manifest and every tensor file it references.
pub fn load_dataset(manifest_path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let grid = DesignGrid::new(manifest.grid.clone())?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut names = Vec::new();
    for (c, class) in manifest.classes.iter().enumerate() {
        if names.contains(&class.label) {
            return Err(Error::InvalidDataset(format!(
                "class label '{}' appears twice",
                class.label
            )));
        }
        names.push(class.label.clone());
        for s in &class.samples {
            let p = base.join(s);
            let t = read_tensor(&p).map_err(|e| {
                Error::InvalidDataset(format!("cannot read sample {}: {e}", p.display()))
            })?;
            samples.push(t);
            labels.push(c);
        }
    }
    LabeledDataset::new(samples, labels, names, grid)
}

/// Writes `manifest.json` plus one tensor file per sample under `dir/samples`
/// and returns the manifest path.
pub fn save_dataset(data: &LabeledDataset, dir: &Path) -> Result<PathBuf> {
    let sample_dir = dir.join("samples");
    fs::create_dir_all(&sample_dir)?;
    let mut classes: Vec<ManifestClass> = data
        .class_names
        .iter()
        .map(|n| ManifestClass {
            label: n.clone(),
            samples: Vec::new(),
        })
        .collect();
    for (i, (s, &l)) in data.samples.iter().zip(&data.labels).enumerate() {
        let name = format!("samples/{i:05}_c{l}.dtf");
        write_tensor(&dir.join(&name), s)?;
        classes[l].samples.push(name);
    }
    let manifest = DatasetManifest {
        grid: data.grid.points().to_vec(),
        classes,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// A decomposition as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Ftd(FtdModel),
    Hosvd(TuckerFactors),
}

const MODEL_FORMAT: &str = "ftucker-model";
const BASES_FORMAT: &str = "ftucker-bases";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    kind: String,
    shape: Vec<usize>,
    ranks: Vec<usize>,
    core: String,
    factors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<DesignGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default)]
    trace: Vec<f64>,
    #[serde(default)]
    objective_trace: Vec<f64>,
    #[serde(default)]
    converged: bool,
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!(
            "expected format '{expected}', found '{format}'"
        )));
    }
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn model_to_json(model: &SavedModel) -> Result<String> {
    let doc = match model {
        SavedModel::Ftd(m) => ModelDoc {
            format: MODEL_FORMAT.into(),
            version: VERSION,
            kind: "ftd".into(),
            shape: m.shape(),
            ranks: m.ranks().to_vec(),
            core: tensor_b64(&m.core)?,
            factors: m
                .discrete_factors
                .iter()
                .map(matrix_b64)
                .collect::<Result<_>>()?,
            weights: Some(matrix_b64(&m.weights)?),
            design: Some(m.design.clone()),
            kernel: Some(m.kernel),
            lambda: Some(m.lambda),
            trace: m.trace.clone(),
            objective_trace: m.objective_trace.clone(),
            converged: m.converged,
        },
        SavedModel::Hosvd(f) => ModelDoc {
            format: MODEL_FORMAT.into(),
            version: VERSION,
            kind: "hosvd".into(),
            shape: f.shape(),
            ranks: f.ranks().to_vec(),
            core: tensor_b64(&f.core)?,
            factors: f.factors.iter().map(matrix_b64).collect::<Result<_>>()?,
            weights: None,
            design: None,
            kernel: None,
            lambda: None,
            trace: Vec::new(),
            objective_trace: Vec::new(),
            converged: true,
        },
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn model_from_json(text: &str) -> Result<SavedModel> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, MODEL_FORMAT)?;
    let core = tensor_from_b64(&doc.core)?;
    let factors = doc
        .factors
        .iter()
        .map(|s| matrix_from_b64(s))
        .collect::<Result<Vec<_>>>()?;
    let missing = |field: &str| Error::Format(format!("ftd model lacks '{field}'"));
    match doc.kind.as_str() {
        "ftd" => {
            let weights =
                matrix_from_b64(doc.weights.as_deref().ok_or_else(|| missing("weights"))?)?;
            let mut m = FtdModel::from_parts(
                core,
                factors,
                weights,
                doc.design.ok_or_else(|| missing("design"))?,
                doc.kernel.ok_or_else(|| missing("kernel"))?,
                doc.lambda.ok_or_else(|| missing("lambda"))?,
            )?
            .with_traces(doc.trace, doc.objective_trace);
            m.converged = doc.converged;
            Ok(SavedModel::Ftd(m))
        }
        "hosvd" => {
            let f = TuckerFactors { core, factors };
            f.validate()?;
            Ok(SavedModel::Hosvd(f))
        }
        other => Err(Error::Format(format!("unknown model kind '{other}'"))),
    }
}

pub fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    model_from_json(&fs::read_to_string(path)?)
}

/// Class bases together with the grid they were built on.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub method: String,
    pub ranks: Vec<usize>,
    pub grid: DesignGrid,
    pub class_names: Vec<String>,
    pub bases: Vec<ClassBasis>,
}

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    format: String,
    version: u32,
    method: String,
    ranks: Vec<usize>,
    grid: DesignGrid,
    class_names: Vec<String>,
    classes: Vec<BasisClassDoc>,
}

#[derive(Serialize, Deserialize)]
struct BasisClassDoc {
    label: usize,
    elements: Vec<String>,
}

pub fn bases_to_json(set: &BasisSet) -> Result<String> {
    let doc = BasisDoc {
        format: BASES_FORMAT.into(),
        version: VERSION,
        method: set.method.clone(),
        ranks: set.ranks.clone(),
        grid: set.grid.clone(),
        class_names: set.class_names.clone(),
        classes: set
            .bases
            .iter()
            .map(|b| {
                Ok(BasisClassDoc {
                    label: b.label,
                    elements: b.elements.iter().map(tensor_b64).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn bases_from_json(text: &str) -> Result<BasisSet> {
    let doc: BasisDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, BASES_FORMAT)?;
    let bases = doc
        .classes
        .into_iter()
        .map(|c| {
            if c.label >= doc.class_names.len() {
                return Err(Error::Format(format!(
                    "basis label {} out of range",
                    c.label
                )));
            }
            Ok(ClassBasis {
                label: c.label,
                elements: c
                    .elements
                    .iter()
                    .map(|s| tensor_from_b64(s))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BasisSet {
        method: doc.method,
        ranks: doc.ranks,
        grid: doc.grid,
        class_names: doc.class_names,
        bases,
    })
}

pub fn save_bases(path: &Path, set: &BasisSet) -> Result<()> {
    fs::write(path, bases_to_json(set)?)?;
    Ok(())
}

pub fn load_bases(path: &Path) -> Result<BasisSet> {
    bases_from_json(&fs::read_to_string(path)?)
}

/// Parameters of the digit transfer experiment.
///
/// `ranks` are the sample-mode ranks (spatial modes, then the continuous
/// mode); grid indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ranks: Vec<usize>,
    pub k_values: Vec<usize>,
    pub lambda: f64,
    pub bandwidth: f64,
    pub tau: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub train_grid_idx: Vec<usize>,
    pub test_grid_idx: Vec<usize>,
    pub train_fraction: f64,
    pub dataset: crate::datagen::SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ranks: vec![5, 5, 2],
            k_values: (1..=15).collect(),
            lambda: 1.0,
            bandwidth: 4.0,
            tau: 1e-6,
            max_iters: 200,
            seed: 0,
            train_grid_idx: (0..50).step_by(4).collect(),
            test_grid_idx: (0..13).collect(),
            train_fraction: 0.85,
            dataset: crate::datagen::SynthConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        let p = self.dataset.p;
        if self.ranks.len() != 3 {
            return Err(Error::InvalidParameter(
                "ranks must list two spatial ranks and one continuous rank".into(),
            ));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::InvalidParameter("k values must be positive".into()));
        }
        for (name, idx) in [
            ("train", &self.train_grid_idx),
            ("test", &self.test_grid_idx),
        ] {
            if idx.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid indices are empty"
                )));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid indices must be strictly increasing"
                )));
            }
            if let Some(&i) = idx.iter().find(|&&i| i >= p) {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid index {i} out of range for {p} points"
                )));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(
                "train_fraction must lie in (0, 1)".into(),
            ));
        }
        self.ftd_config(1)?.validate()
    }

    /// FTD settings for stacked class tensors with `m` samples.
    pub fn ftd_config(&self, m: usize) -> Result<FtdConfig> {
        let spatial: usize = self.ranks[..self.ranks.len() - 1].iter().product();
        let mut ranks = vec![m.min(spatial * self.ranks[self.ranks.len() - 1]).max(1)];
        ranks.extend_from_slice(&self.ranks);
        let mut cfg = FtdConfig::new(ranks, KernelSpec::gaussian(self.bandwidth)?);
        cfg.lambda = self.lambda;
        cfg.tol = self.tau;
        cfg.max_iters = self.max_iters;
        cfg.seed = self.seed;
        cfg.stop_rule = StopRule::Relative;
        Ok(cfg)
    }
}
