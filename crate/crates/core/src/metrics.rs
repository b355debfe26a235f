//! Classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed by `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<Self> {
        check_lengths(truth, pred)?;
        let mut counts = vec![vec![0usize; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::InvalidParameter(format!(
                    "label {} out of range for {num_classes} classes",
                    t.max(p)
                )));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Per-class F1; a class with no true and no predicted instances scores 0.
    pub fn f1_scores(&self) -> Vec<f64> {
        let c = self.num_classes();
        (0..c)
            .map(|k| {
                let tp = self.counts[k][k] as f64;
                let predicted: usize = (0..c).map(|t| self.counts[t][k]).sum();
                let actual: usize = self.counts[k].iter().sum();
                if predicted == 0 || actual == 0 {
                    return 0.0;
                }
                let precision = tp / predicted as f64;
                let recall = tp / actual as f64;
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::InvalidParameter("no samples to score".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean of per-class F1 over `num_classes` classes.
pub fn macro_f1(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<f64> {
    let cm = ConfusionMatrix::new(truth, pred, num_classes)?;
    if num_classes == 0 {
        return Err(Error::InvalidParameter("no classes".into()));
    }
    Ok(cm.f1_scores().iter().sum::<f64>() / num_classes as f64)
}

/// Serialized as `{ "accuracy": f, "macro_f1": f, "confusion": [[...]] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn compute(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<Self> {
        let cm = ConfusionMatrix::new(truth, pred, num_classes)?;
        Ok(Self {
            accuracy: accuracy(truth, pred)?,
            macro_f1: macro_f1(truth, pred, num_classes)?,
            confusion: cm.counts,
        })
    }
}
