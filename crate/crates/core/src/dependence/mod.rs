//! Batch estimators of statistical dependence between two latent subspaces.
//!
//! | Measure | Function | Gradient |
//! |---------|----------|----------|
//! | distance correlation | [`dcor`] | [`dcor_with_grad`] |
//! | multi-kernel MMD | [`mmd`] | [`mmd_with_grad`] |
//! | Donsker-Varadhan MI bound | [`mine_bound`] | [`mine_bound_with_grad`] |
//!
//! All estimators operate on a [`Batch2D`] (`N × d` matrix, one row per
//! sample) and are pure functions of their inputs.

mod dcor;
mod mine;
mod mmd;

pub use dcor::{dcor, dcor_with_grad, dcov, double_center, pairwise_distances, DCOR_EPS};
pub use mine::{mine_bound, mine_bound_with_grad, EmaBaseline, MineGrads, MineNet};
pub use mmd::{mmd, mmd_with, mmd_with_grad, KernelSpec, MmdOptions};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N × d` matrix of latent codes, finite entries, `N, d ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch2D(Array2<f64>);

impl Batch2D {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!("empty batch of shape {:?}", data.shape())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("batch contains non-finite entries".into()));
        }
        Ok(Self(data))
    }

    pub fn from_rows(n: usize, d: usize, flat: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(arr)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Gradient of a scalar measure with respect to both latent batches.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrads {
    pub z1: Array2<f64>,
    pub z2: Array2<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Dcor,
    Mmd,
    Mine,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Dcor => "dcor",
            Measure::Mmd => "mmd",
            Measure::Mine => "mine",
        }
    }
}

fn same_n(z1: &Batch2D, z2: &Batch2D) -> Result<usize> {
    if z1.n() != z2.n() {
        return Err(Error::ShapeMismatch(format!("batch sizes differ: {} vs {}", z1.n(), z2.n())));
    }
    Ok(z1.n())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::Batch2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_batch(seed: u64, n: usize, d: usize) -> Batch2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch2D::from_rows(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central finite differences of `f` over every entry of `b`.
    pub fn fd_grad(b: &Batch2D, h: f64, f: &dyn Fn(&Batch2D) -> f64) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((b.n(), b.dim()));
        for i in 0..b.n() {
            for j in 0..b.dim() {
                let mut p = b.as_array().clone();
                let mut m = b.as_array().clone();
                p[[i, j]] += h;
                m[[i, j]] -= h;
                out[[i, j]] = (f(&Batch2D::new(p).unwrap()) - f(&Batch2D::new(m).unwrap())) / (2.0 * h);
            }
        }
        out
    }

    pub fn max_rel_err(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4))
            .fold(0.0, f64::max)
    }
}
