//! Donsker-Varadhan lower bound on mutual information with a neural
//! statistic network `T(z1, z2)`.
//!
//! Joint samples are the aligned rows `(z1_i, z2_i)`; marginal samples pair
//! `z1_i` with `z2_{perm(i)}`. The log-mean-exp term is evaluated with max
//! subtraction.

use ndarray::Array2;
use rand::Rng;

use super::{same_n, Batch2D, LatentGrads};
use crate::error::{Error, Result};
use crate::nn::{Mlp, Params};

/// Statistic network: concatenated `(z1_row, z2_row)` → scalar, two ReLU
/// hidden layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MineNet {
    pub d1: usize,
    pub d2: usize,
    pub mlp: Mlp,
}

impl MineNet {
    pub fn new<R: Rng>(d1: usize, d2: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            d1,
            d2,
            mlp: Mlp::new("mine", &[d1 + d2, hidden, hidden, 1], rng),
        }
    }

    fn pack(&self, z1: &Batch2D, z2: &Batch2D, perm: Option<&[usize]>) -> Vec<f64> {
        let n = z1.n();
        let mut x = Vec::with_capacity(n * (self.d1 + self.d2));
        for i in 0..n {
            x.extend(z1.view().row(i).iter());
            let j = perm.map_or(i, |p| p[i]);
            x.extend(z2.view().row(j).iter());
        }
        x
    }

    /// `T` evaluated on each aligned row pair.
    pub fn scores(&self, z1: &Batch2D, z2: &Batch2D) -> Vec<f64> {
        let x = self.pack(z1, z2, None);
        self.mlp.forward(&x, z1.n()).0
    }
}

impl Params for MineNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.mlp.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.mlp.visit_mut(f)
    }
}

/// Running average of the marginal `mean(exp T)` used by the optional
/// bias-corrected gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmaBaseline {
    pub decay: f64,
    value: Option<f64>,
}

impl EmaBaseline {
    pub fn new(decay: f64) -> Self {
        Self { decay, value: None }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    fn update(&mut self, batch_mean: f64) -> f64 {
        let v = match self.value {
            None => batch_mean,
            Some(prev) => self.decay * prev + (1.0 - self.decay) * batch_mean,
        };
        self.value = Some(v);
        v
    }
}

impl Default for EmaBaseline {
    fn default() -> Self {
        Self::new(0.99)
    }
}

#[derive(Clone, Debug)]
pub struct MineGrads {
    pub latents: LatentGrads,
    /// Flat, in the network's [`Params`] order.
    pub params: Vec<f64>,
}

fn check(t: &MineNet, z1: &Batch2D, z2: &Batch2D, perm: &[usize]) -> Result<usize> {
    let n = same_n(z1, z2)?;
    if n < 2 {
        return Err(Error::InvalidInput("MINE bound needs at least two samples".into()));
    }
    if z1.dim() != t.d1 || z2.dim() != t.d2 {
        return Err(Error::ShapeMismatch(format!(
            "statistic network expects ({}, {}) dims, got ({}, {})",
            t.d1,
            t.d2,
            z1.dim(),
            z2.dim()
        )));
    }
    let mut seen = vec![false; n];
    if perm.len() != n || !perm.iter().all(|&p| p < n && !std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidInput("marginal index list is not a permutation".into()));
    }
    Ok(n)
}

/// Returns the bound and the softmax weights of the marginal scores.
fn dv_terms(joint: &[f64], marg: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = joint.len() as f64;
    let mean_joint = joint.iter().sum::<f64>() / n;
    let m = marg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = marg.iter().map(|t| (t - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lme = m + (sum / n).ln();
    let bound = mean_joint - lme;
    if !bound.is_finite() {
        return Err(Error::NumericalError(format!("MINE bound is {bound}")));
    }
    Ok((bound, exps.into_iter().map(|e| e / sum).collect()))
}

/// `mean_i T(z1_i, z2_i) - log mean_i exp T(z1_i, z2_perm(i))`.
pub fn mine_bound(t: &MineNet, z1: &Batch2D, z2: &Batch2D, perm: &[usize]) -> Result<f64> {
    let n = check(t, z1, z2, perm)?;
    let joint = t.mlp.forward(&t.pack(z1, z2, None), n).0;
    let marg = t.mlp.forward(&t.pack(z1, z2, Some(perm)), n).0;
    dv_terms(&joint, &marg).map(|(b, _)| b)
}

/// Bound value plus gradients with respect to the latents (at fixed `T`) and
/// to the statistic-network parameters (at fixed latents).
///
/// With `ema` set, the marginal term's gradient uses the running average of
/// `mean(exp T)` in its denominator; the returned value is always the plain
/// batch bound.
pub fn mine_bound_with_grad(
    t: &MineNet,
    z1: &Batch2D,
    z2: &Batch2D,
    perm: &[usize],
    ema: Option<&mut EmaBaseline>,
) -> Result<(f64, MineGrads)> {
    let n = check(t, z1, z2, perm)?;
    let nf = n as f64;
    let (joint, jcache) = t.mlp.forward(&t.pack(z1, z2, None), n);
    let (marg, mcache) = t.mlp.forward(&t.pack(z1, z2, Some(perm)), n);
    let (bound, weights) = dv_terms(&joint, &marg)?;

    let g_joint = vec![1.0 / nf; n];
    let g_marg: Vec<f64> = match ema {
        None => weights.iter().map(|w| -w).collect(),
        Some(ema) => {
            let mean_exp = marg.iter().map(|v| v.exp()).sum::<f64>() / nf;
            let denom = ema.update(mean_exp);
            marg.iter().map(|v| -v.exp() / (nf * denom)).collect()
        }
    };

    let mut params = vec![0.0; t.num_params()];
    let gx_joint = t.mlp.backward(&jcache, &g_joint, &mut params, true).expect("input grad");
    let gx_marg = t.mlp.backward(&mcache, &g_marg, &mut params, true).expect("input grad");

    let width = t.d1 + t.d2;
    let mut g1 = Array2::zeros((n, t.d1));
    let mut g2 = Array2::zeros((n, t.d2));
    for i in 0..n {
        let rj = &gx_joint[i * width..(i + 1) * width];
        let rm = &gx_marg[i * width..(i + 1) * width];
        for c in 0..t.d1 {
            g1[[i, c]] += rj[c] + rm[c];
        }
        for c in 0..t.d2 {
            g2[[i, c]] += rj[t.d1 + c];
            g2[[perm[i], c]] += rm[t.d1 + c];
        }
    }
    if !bound.is_finite() || params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalError("non-finite MINE gradient".into()));
    }
    Ok((
        bound,
        MineGrads {
            latents: LatentGrads { z1: g1, z2: g2 },
            params,
        },
    ))
}
