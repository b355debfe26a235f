//! End-to-end digit transfer experiment: equal-domain and transfer-domain
//! classification with HOSVD and functional Tucker class bases.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::{
    predict_sweep, train_ftd, train_hosvd, transfer_bases, ClassBasis, LabeledDataset,
};
use crate::datagen::{split_train_test, subsample, synth_digit_dataset};
use crate::error::{Error, Result};
use crate::io::ExperimentConfig;
use crate::metrics::{accuracy, macro_f1};

/// Metric values per k for both methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub k: Vec<usize>,
    pub hosvd: Vec<f64>,
    pub ftd: Vec<f64>,
}

impl Curve {
    pub fn mean_hosvd(&self) -> f64 {
        mean(&self.hosvd)
    }

    pub fn mean_ftd(&self) -> f64 {
        mean(&self.ftd)
    }

    /// `k,hosvd,ftd` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,hosvd,ftd\n");
        for ((k, h), f) in self.k.iter().zip(&self.hosvd).zip(&self.ftd) {
            out.push_str(&format!("{k},{h},{f}\n"));
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub equal_accuracy: Curve,
    pub equal_macro_f1: Curve,
    pub transfer_accuracy: Curve,
    pub transfer_macro_f1: Curve,
    pub train_per_class: Vec<usize>,
    pub test_per_class: Vec<usize>,
    /// Mean final relative error of the per-class FTD fits.
    pub ftd_fit_error: f64,
}

impl ExperimentReport {
    /// Named CSV outputs.
    pub fn csv_files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("accuracy_equal.csv", self.equal_accuracy.to_csv()),
            ("accuracy_transfer.csv", self.transfer_accuracy.to_csv()),
            ("macro_f1_equal.csv", self.equal_macro_f1.to_csv()),
            ("macro_f1_transfer.csv", self.transfer_macro_f1.to_csv()),
        ]
    }
}

fn per_class_counts(d: &LabeledDataset) -> Vec<usize> {
    (0..d.num_classes())
        .map(|c| d.class_indices(c).len())
        .collect()
}

fn score(
    test: &LabeledDataset,
    bases: &[ClassBasis],
    k_values: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let preds = predict_sweep(&test.samples, bases, k_values)?;
    let mut acc = Vec::with_capacity(k_values.len());
    let mut f1 = Vec::with_capacity(k_values.len());
    for p in &preds {
        acc.push(accuracy(&test.labels, p)?);
        f1.push(macro_f1(&test.labels, p, test.num_classes())?);
    }
    Ok((acc, f1))
}

/// Runs both domains on a dataset generated from `cfg.dataset` with its seed
/// replaced by `cfg.seed`.
pub fn run_digits(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut synth = cfg.dataset.clone();
    synth.seed = cfg.seed;
    let data = synth_digit_dataset(&synth)?;
    run_on_dataset(cfg, &data)
}

/// Splits `data`, trains on the training grid and evaluates on the training
/// grid (equal domain) and on the test grid (transfer domain).
pub fn run_on_dataset(cfg: &ExperimentConfig, data: &LabeledDataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.train_grid_idx.len() != cfg.test_grid_idx.len() {
        return Err(Error::InvalidParameter(format!(
            "HOSVD bases need equally many train and test grid points ({} vs {})",
            cfg.train_grid_idx.len(),
            cfg.test_grid_idx.len()
        )));
    }
    let started = Instant::now();
    let (train, test) = split_train_test(data, cfg.train_fraction, cfg.seed)?;
    let train = subsample(&train, &cfg.train_grid_idx)?;
    let test_equal = subsample(&test, &cfg.train_grid_idx)?;
    let test_transfer = subsample(&test, &cfg.test_grid_idx)?;
    let kmax = *cfg.k_values.iter().max().expect("validated");
    let sample_ranks = &cfg.ranks;

    let hosvd_bases = train_hosvd(&train, sample_ranks, kmax)?;
    let m = per_class_counts(&train).into_iter().min().unwrap_or(0);
    let models = train_ftd(&train, &cfg.ftd_config(m)?)?;
    let ftd_fit_error = mean(
        &models
            .values()
            .map(|m| m.final_error().unwrap_or(f64::NAN))
            .collect::<Vec<_>>(),
    );
    log::info!(
        "trained {} classes in {:.1}s, mean FTD fit error {ftd_fit_error:.3e}",
        models.len(),
        started.elapsed().as_secs_f64()
    );
    let ftd_equal = transfer_bases(&models, &train.grid, sample_ranks, kmax)?;
    let ftd_transfer = transfer_bases(&models, &test_transfer.grid, sample_ranks, kmax)?;

    let k = cfg.k_values.clone();
    let (h_eq_acc, h_eq_f1) = score(&test_equal, &hosvd_bases, &k)?;
    let (f_eq_acc, f_eq_f1) = score(&test_equal, &ftd_equal, &k)?;
    let (h_tr_acc, h_tr_f1) = score(&test_transfer, &hosvd_bases, &k)?;
    let (f_tr_acc, f_tr_f1) = score(&test_transfer, &ftd_transfer, &k)?;
    let curve = |h: Vec<f64>, f: Vec<f64>| Curve {
        k: k.clone(),
        hosvd: h,
        ftd: f,
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        equal_accuracy: curve(h_eq_acc, f_eq_acc),
        equal_macro_f1: curve(h_eq_f1, f_eq_f1),
        transfer_accuracy: curve(h_tr_acc, f_tr_acc),
        transfer_macro_f1: curve(h_tr_f1, f_tr_f1),
        train_per_class: per_class_counts(&train),
        test_per_class: per_class_counts(&test),
        ftd_fit_error,
    })
}
