//! Evaluation metrics: AUROC, kNN subspace-label confusion matrices,
//! chance-normalised diagonal dominance, and latent scatter export.

mod confusion;
mod metrics;
mod scatter;

pub use confusion::{confusion_matrix, diagonal_dominance, ConfusionMatrix, Embedder};
pub use metrics::{auroc, knn_accuracy, mean_sd};
pub use scatter::{scatter_csv, scatter_export, scatter_svg};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::confounds::{LabeledImage, TestKind};
use crate::error::Result;
use crate::trainer::ModelState;

/// Neighbours used for the subspace-label confusion matrix.
pub const DEFAULT_K: usize = 30;

/// Evaluation of one trained fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold: usize,
    /// Primary-task AUROC in percent, keyed by test distribution name.
    pub auroc: BTreeMap<String, f64>,
    /// On the balanced distribution.
    pub confusion: ConfusionMatrix,
    /// `None` for the shared-latent layout, where it is undefined.
    pub dominance: Option<f64>,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Primary-task AUROC (percent) of the selected snapshot on its
    /// validation fold.
    pub val_auroc: f64,
    pub train_seconds: f64,
}

/// Primary-task AUROC (percent) of a model on a labelled set.
pub fn primary_auroc(model: &ModelState, images: &[LabeledImage]) -> Result<f64> {
    let (s1, _) = model.scores(images)?;
    let y1: Vec<u8> = images.iter().map(|s| s.y1).collect();
    Ok(100.0 * auroc(&s1, &y1)?)
}

/// AUROC on every test distribution plus the confusion matrix on the
/// balanced one. `reference` is the (un-oversampled) fold training set.
pub fn evaluate_model(model: &ModelState, reference: &[LabeledImage], tests: &BTreeMap<TestKind, Vec<LabeledImage>>, k: usize) -> Result<(BTreeMap<String, f64>, ConfusionMatrix, Option<f64>)> {
    let mut aurocs = BTreeMap::new();
    for (kind, set) in tests {
        aurocs.insert(kind.name().to_string(), primary_auroc(model, set)?);
    }
    let balanced = tests
        .get(&TestKind::Balanced)
        .ok_or_else(|| crate::Error::InvalidInput("balanced test split missing".into()))?;
    let cm = confusion_matrix(model, reference, balanced, k)?;
    let dominance = diagonal_dominance(&cm).ok();
    Ok((aurocs, cm, dominance))
}
