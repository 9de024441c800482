use serde::{Deserialize, Serialize};

use crate::cde::CdeModel;
use crate::data::Dataset;
use crate::error::Result;

use super::trainer::argmax;

/// Classification metrics: accuracy plus macro-averaged precision, recall,
/// and F1, with the full confusion matrix (rows = true class).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    /// Per-epoch training losses, filled in by callers that have a history.
    #[serde(default)]
    pub loss_curve: Vec<f64>,
}

impl MetricsReport {
    /// Derives every metric from a confusion matrix. A class that is never
    /// predicted has undefined precision; it is scored 0.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let k = confusion.len();
        let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        let accuracy = trace as f64 / total.max(1) as f64;

        let mut precision = vec![0.0; k];
        let mut recall = vec![0.0; k];
        let mut f1 = vec![0.0; k];
        for c in 0..k {
            let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let tp = confusion[c][c];
            precision[c] = if predicted > 0 {
                tp as f64 / predicted as f64
            } else {
                0.0
            };
            recall[c] = if actual > 0 {
                tp as f64 / actual as f64
            } else {
                0.0
            };
            f1[c] = if precision[c] + recall[c] > 0.0 {
                2.0 * precision[c] * recall[c] / (precision[c] + recall[c])
            } else {
                0.0
            };
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / k as f64;
        Self {
            accuracy,
            macro_precision: mean(&precision),
            macro_recall: mean(&recall),
            macro_f1: mean(&f1),
            confusion,
            loss_curve: Vec::new(),
        }
    }

    pub fn from_predictions(k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = vec![vec![0usize; k]; k];
        for (truth, pred) in pairs {
            confusion[truth][pred] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Argmax-of-logits evaluation over a test set.
pub fn evaluate(model: &CdeModel, test: &Dataset) -> Result<MetricsReport> {
    let grids = test.preprocessed()?;
    let mut pairs = Vec::with_capacity(grids.len());
    for (grid, label) in &grids {
        let (logits, _) = model.forward_classify(grid)?;
        pairs.push((*label, argmax(logits.data())));
    }
    Ok(MetricsReport::from_predictions(test.num_classes, pairs))
}
