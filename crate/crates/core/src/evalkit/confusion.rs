use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::metrics::knn_accuracy;
use crate::confounds::LabeledImage;
use crate::error::{Error, Result};
use crate::trainer::ModelState;

/// Anything that maps images to latent codes.
pub trait Embedder {
    /// `n × L` latent codes.
    fn embed(&self, images: &[LabeledImage]) -> Result<Array2<f64>>;
    /// Subspace sizes `(d1, d2)`, or `None` for a single shared latent.
    fn split(&self) -> Option<(usize, usize)>;
}

impl Embedder for ModelState {
    fn embed(&self, images: &[LabeledImage]) -> Result<Array2<f64>> {
        ModelState::embed(self, images)
    }

    fn split(&self) -> Option<(usize, usize)> {
        (!self.config.shared).then_some(self.config.split)
    }
}

/// kNN accuracy (percent) of each latent subspace for each label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum ConfusionMatrix {
    Split { z1_y1: f64, z1_y2: f64, z2_y1: f64, z2_y2: f64 },
    /// Adversarial models have one latent, hence only two entries.
    Shared { z_y1: f64, z_y2: f64 },
}

impl ConfusionMatrix {
    /// `[[z1→y1, z1→y2], [z2→y1, z2→y2]]`.
    pub fn from_grid(g: [[f64; 2]; 2]) -> Self {
        ConfusionMatrix::Split {
            z1_y1: g[0][0],
            z1_y2: g[0][1],
            z2_y1: g[1][0],
            z2_y2: g[1][1],
        }
    }

    pub fn grid(&self) -> Option<[[f64; 2]; 2]> {
        match *self {
            ConfusionMatrix::Split { z1_y1, z1_y2, z2_y1, z2_y2 } => Some([[z1_y1, z1_y2], [z2_y1, z2_y2]]),
            ConfusionMatrix::Shared { .. } => None,
        }
    }

    /// Named entries in display order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ConfusionMatrix::Split { z1_y1, z1_y2, z2_y1, z2_y2 } => vec![("z1_y1", z1_y1), ("z1_y2", z1_y2), ("z2_y1", z2_y1), ("z2_y2", z2_y2)],
            ConfusionMatrix::Shared { z_y1, z_y2 } => vec![("z_y1", z_y1), ("z_y2", z_y2)],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    /// Entry-wise mean of matrices with the same layout.
    pub fn mean(ms: &[ConfusionMatrix]) -> Option<ConfusionMatrix> {
        let first = ms.first()?;
        let n = ms.len() as f64;
        let avg = |name: &str| ms.iter().map(|m| m.get(name).unwrap_or(f64::NAN)).sum::<f64>() / n;
        Some(match first {
            ConfusionMatrix::Split { .. } => ConfusionMatrix::Split {
                z1_y1: avg("z1_y1"),
                z1_y2: avg("z1_y2"),
                z2_y1: avg("z2_y1"),
                z2_y2: avg("z2_y2"),
            },
            ConfusionMatrix::Shared { .. } => ConfusionMatrix::Shared {
                z_y1: avg("z_y1"),
                z_y2: avg("z_y2"),
            },
        })
    }
}

/// Subspace-label kNN accuracies: the reference set is the embedded training
/// set, queries are the embedded evaluation (balanced) split.
pub fn confusion_matrix(model: &dyn Embedder, train: &[LabeledImage], eval: &[LabeledImage], k: usize) -> Result<ConfusionMatrix> {
    let ztr = model.embed(train)?;
    let zte = model.embed(eval)?;
    let labels = |set: &[LabeledImage]| -> [Vec<u8>; 2] { [set.iter().map(|s| s.y1).collect(), set.iter().map(|s| s.y2).collect()] };
    let (ltr, lte) = (labels(train), labels(eval));
    let acc = |c0: usize, c1: usize, task: usize| knn_accuracy(ztr.slice(s![.., c0..c1]), &ltr[task], zte.slice(s![.., c0..c1]), &lte[task], k);
    match model.split() {
        None => {
            let l = ztr.ncols();
            Ok(ConfusionMatrix::Shared {
                z_y1: acc(0, l, 0)?,
                z_y2: acc(0, l, 1)?,
            })
        }
        Some((d1, d2)) => {
            if ztr.ncols() != d1 + d2 {
                return Err(Error::ShapeMismatch(format!("latent has {} columns, split is ({d1}, {d2})", ztr.ncols())));
            }
            let l = d1 + d2;
            Ok(ConfusionMatrix::from_grid([[acc(0, d1, 0)?, acc(0, d1, 1)?], [acc(d1, l, 0)?, acc(d1, l, 1)?]]))
        }
    }
}

/// Chance-normalised diagonal dominance:
/// `Σ_diag |a − 50| / (Σ_diag |a − 50| + Σ_off |a − 50|)`, or ½ when every
/// entry sits exactly at chance.
pub fn diagonal_dominance(cm: &ConfusionMatrix) -> Result<f64> {
    let g = cm.grid().ok_or_else(|| Error::UndefinedMetric("diagonal dominance needs split subspaces".into()))?;
    let dev = |v: f64| (v - 50.0).abs();
    let diag = dev(g[0][0]) + dev(g[1][1]);
    let off = dev(g[0][1]) + dev(g[1][0]);
    if diag + off == 0.0 {
        return Ok(0.5);
    }
    Ok(diag / (diag + off))
}
