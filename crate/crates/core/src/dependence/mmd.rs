//! Quadratic-time MMD between the row distributions of two subspaces with a
//! mixture-of-RBF kernel.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{same_n, Batch2D, LatentGrads};
use crate::error::{Error, Result};

/// RBF bandwidths; the kernel is the unweighted sum over them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::InvalidInput("kernel needs at least one bandwidth".into()));
        }
        if bandwidths.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("bandwidths must be positive and finite".into()));
        }
        Ok(Self { bandwidths })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Kernel value and `dk/dr²` at squared distance `r2`.
    fn eval(&self, r2: f64) -> (f64, f64) {
        let mut k = 0.0;
        let mut dk = 0.0;
        for s in &self.bandwidths {
            let inv = 1.0 / (2.0 * s * s);
            let e = (-r2 * inv).exp();
            k += e;
            dk -= inv * e;
        }
        (k, dk)
    }
}

impl Default for KernelSpec {
    /// Powers of two from 2^-3 to 2^3.
    fn default() -> Self {
        Self {
            bandwidths: (-3..=3).map(|p| 2f64.powi(p)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmdOptions {
    /// Use `2/(N(N-1))` over off-diagonal pairs for the cross term instead of
    /// `2/N^2` over all pairs.
    pub cross_unbiased: bool,
}

fn check(z1: &Batch2D, z2: &Batch2D) -> Result<usize> {
    let n = same_n(z1, z2)?;
    if n < 2 {
        return Err(Error::InvalidInput("mmd needs at least two samples".into()));
    }
    if z1.dim() != z2.dim() {
        return Err(Error::ShapeMismatch(format!("subspace dims differ: {} vs {}", z1.dim(), z2.dim())));
    }
    Ok(n)
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mmd(z1: &Batch2D, z2: &Batch2D, k: &KernelSpec) -> Result<f64> {
    mmd_with(z1, z2, k, MmdOptions::default())
}

pub fn mmd_with(z1: &Batch2D, z2: &Batch2D, k: &KernelSpec, opts: MmdOptions) -> Result<f64> {
    mmd_impl(z1, z2, k, opts, false).map(|(v, _)| v)
}

pub fn mmd_with_grad(z1: &Batch2D, z2: &Batch2D, k: &KernelSpec, opts: MmdOptions) -> Result<(f64, LatentGrads)> {
    mmd_impl(z1, z2, k, opts, true).map(|(v, g)| (v, g.expect("requested")))
}

fn mmd_impl(z1: &Batch2D, z2: &Batch2D, k: &KernelSpec, opts: MmdOptions, grad: bool) -> Result<(f64, Option<LatentGrads>)> {
    let n = check(z1, z2)?;
    let d = z1.dim();
    let (x, y) = (z1.view(), z2.view());
    let nf = n as f64;
    let within = 1.0 / (nf * (nf - 1.0));
    let cross = if opts.cross_unbiased { 2.0 / (nf * (nf - 1.0)) } else { 2.0 / (nf * nf) };

    let mut gx = Array2::<f64>::zeros((n, d));
    let mut gy = Array2::<f64>::zeros((n, d));
    let mut within_sums = [0.0; 2];

    // Within-subspace sums visit each unordered pair once and count it twice.
    for (s, (m, g)) in [(&x, &mut gx), (&y, &mut gy)].into_iter().enumerate() {
        for i in 0..n {
            for j in (i + 1)..n {
                let (kv, dk) = k.eval(sq_dist(m.row(i), m.row(j)));
                within_sums[s] += 2.0 * within * kv;
                if grad {
                    // d/dx_i of 2*within*k(|x_i - x_j|^2) = 4*within*dk*(x_i - x_j)
                    let c = 4.0 * within * dk;
                    for t in 0..d {
                        let diff = m[[i, t]] - m[[j, t]];
                        g[[i, t]] += c * diff;
                        g[[j, t]] -= c * diff;
                    }
                }
            }
        }
    }
    let mut cross_terms = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if opts.cross_unbiased && i == j {
                continue;
            }
            let (kv, dk) = k.eval(sq_dist(x.row(i), y.row(j)));
            cross_terms.push(kv);
            if grad {
                let c = -2.0 * cross * dk;
                for t in 0..d {
                    let diff = x[[i, t]] - y[[j, t]];
                    gx[[i, t]] += c * diff;
                    gy[[j, t]] -= c * diff;
                }
            }
        }
    }
    // Summing in sorted order makes the value exactly symmetric in (z1, z2).
    cross_terms.sort_by(f64::total_cmp);
    let value = (within_sums[0] + within_sums[1]) - cross * cross_terms.iter().sum::<f64>();
    Ok((value, grad.then_some(LatentGrads { z1: gx, z2: gy })))
}
