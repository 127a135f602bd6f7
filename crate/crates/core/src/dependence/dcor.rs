//! Empirical distance covariance and distance correlation.

use ndarray::{Array1, Array2, Axis};

use super::{same_n, Batch2D, LatentGrads};
use crate::error::{Error, Result};

/// Minimum self distance covariance for [`dcor`] to be defined.
pub const DCOR_EPS: f64 = 1e-10;

/// Mean products below this are treated as round-off and clamped to zero.
const CLAMP: f64 = -1e-12;

pub fn pairwise_distances(b: &Batch2D) -> Array2<f64> {
    let x = b.view();
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// `A_ij = m_ij - rowmean_i - colmean_j + grandmean`.
pub fn double_center(m: &Array2<f64>) -> Result<Array2<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!("expected a square matrix, got {:?}", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix contains non-finite entries".into()));
    }
    let row: Array1<f64> = m.mean_axis(Axis(1)).expect("non-empty");
    let col: Array1<f64> = m.mean_axis(Axis(0)).expect("non-empty");
    let grand = row.mean().expect("non-empty");
    let mut a = m.clone();
    for ((i, j), v) in a.indexed_iter_mut() {
        *v += grand - row[i] - col[j];
    }
    Ok(a)
}

fn mean_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / (n * n)
}

fn clamp_nonneg(s: f64) -> Result<f64> {
    if s < CLAMP {
        return Err(Error::NumericalError(format!("squared distance covariance is {s:e}")));
    }
    Ok(s.max(0.0))
}

/// Square root of the mean elementwise product of the two double-centered
/// distance matrices.
pub fn dcov(z1: &Batch2D, z2: &Batch2D) -> Result<f64> {
    let n = same_n(z1, z2)?;
    if n < 2 {
        return Err(Error::InvalidInput("dcov needs at least two samples".into()));
    }
    let a = double_center(&pairwise_distances(z1))?;
    let b = double_center(&pairwise_distances(z2))?;
    Ok(clamp_nonneg(mean_product(&a, &b))?.sqrt())
}

struct Centered {
    a: Array2<f64>,
    b: Array2<f64>,
    s12: f64,
    s11: f64,
    s22: f64,
}

fn centered(z1: &Batch2D, z2: &Batch2D) -> Result<Centered> {
    let n = same_n(z1, z2)?;
    if n < 2 {
        return Err(Error::InvalidInput("dcor needs at least two samples".into()));
    }
    let a = double_center(&pairwise_distances(z1))?;
    let b = double_center(&pairwise_distances(z2))?;
    let s12 = clamp_nonneg(mean_product(&a, &b))?;
    let s11 = clamp_nonneg(mean_product(&a, &a))?;
    let s22 = clamp_nonneg(mean_product(&b, &b))?;
    if s11.sqrt() <= DCOR_EPS || s22.sqrt() <= DCOR_EPS {
        return Err(Error::DegenerateInput("a subspace has vanishing distance variance".into()));
    }
    Ok(Centered { a, b, s12, s11, s22 })
}

/// `dcov(z1, z2) / sqrt(dcov(z1, z1) * dcov(z2, z2))`, in `[0, 1]`.
pub fn dcor(z1: &Batch2D, z2: &Batch2D) -> Result<f64> {
    let c = centered(z1, z2)?;
    Ok(c.s12.sqrt() / (c.s11.sqrt() * c.s22.sqrt()).sqrt())
}

/// Backpropagates an upstream gradient on the distance matrix to the rows.
fn distance_backward(x: &Batch2D, dist: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let x = x.view();
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d));
    for k in 0..n {
        for j in 0..n {
            let r = dist[[k, j]];
            if j == k || r == 0.0 {
                continue;
            }
            let coef = (g[[k, j]] + g[[j, k]]) / r;
            for c in 0..d {
                out[[k, c]] += coef * (x[[k, c]] - x[[j, c]]);
            }
        }
    }
    out
}

/// Distance correlation and its gradient with respect to both batches.
///
/// With `s_xy` the mean product of centered matrices, the estimator is
/// `s12^(1/2) * s11^(-1/4) * s22^(-1/4)`. Because centering is a linear
/// projection, `d s12 / d a_ij = B_ij / N^2` on the raw distances. The
/// `s12` branch contributes nothing when `s12` was clamped to zero.
pub fn dcor_with_grad(z1: &Batch2D, z2: &Batch2D) -> Result<(f64, LatentGrads)> {
    let c = centered(z1, z2)?;
    let n2 = (z1.n() * z1.n()) as f64;
    let value = c.s12.sqrt() / (c.s11.sqrt() * c.s22.sqrt()).sqrt();
    let d12 = if c.s12 > 0.0 { value / (2.0 * c.s12) } else { 0.0 };
    let d11 = -value / (4.0 * c.s11);
    let d22 = -value / (4.0 * c.s22);
    let ga = (&c.b * d12 + &c.a * (2.0 * d11)) / n2;
    let gb = (&c.a * d12 + &c.b * (2.0 * d22)) / n2;
    let g1 = distance_backward(z1, &pairwise_distances(z1), &ga);
    let g2 = distance_backward(z2, &pairwise_distances(z2), &gb);
    Ok((value, LatentGrads { z1: g1, z2: g2 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::testutil::{fd_grad, max_rel_err, random_batch};
    use ndarray::array;
    use proptest::prelude::*;

    /// Straight transcription with explicit loops, independent of the
    /// vectorised path above.
    fn loop_dcov(x: &Batch2D, y: &Batch2D) -> f64 {
        let n = x.n();
        let dist = |b: &Batch2D, i: usize, j: usize| -> f64 {
            let mut s = 0.0;
            for c in 0..b.dim() {
                let d = b.view()[[i, c]] - b.view()[[j, c]];
                s += d * d;
            }
            s.sqrt()
        };
        let center = |b: &Batch2D| -> Vec<Vec<f64>> {
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = dist(b, i, j);
                }
            }
            let mut out = vec![vec![0.0; n]; n];
            let mut grand = 0.0;
            for row in &m {
                for v in row {
                    grand += v;
                }
            }
            grand /= (n * n) as f64;
            for i in 0..n {
                for j in 0..n {
                    let mut ri = 0.0;
                    let mut cj = 0.0;
                    for k in 0..n {
                        ri += m[i][k];
                        cj += m[k][j];
                    }
                    out[i][j] = m[i][j] - ri / n as f64 - cj / n as f64 + grand;
                }
            }
            out
        };
        let a = center(x);
        let b = center(y);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i][j] * b[i][j] / (n * n) as f64;
            }
        }
        s.max(0.0).sqrt()
    }

    #[test]
    fn distances_of_three_four_five() {
        let b = Batch2D::new(array![[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_distances(&b), array![[0.0, 5.0], [5.0, 0.0]]);
        let one = Batch2D::new(array![[1.0, 2.0]]).unwrap();
        assert_eq!(pairwise_distances(&one), array![[0.0]]);
    }

    #[test]
    fn distances_match_double_loop() {
        let b = random_batch(11, 4, 3);
        let d = pairwise_distances(&b);
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for c in 0..3 {
                    s += (b.view()[[i, c]] - b.view()[[j, c]]).powi(2);
                }
                assert!((d[[i, j]] - s.sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_batch_is_rejected() {
        assert!(matches!(Batch2D::new(array![[f64::NAN, 0.0]]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn centering_examples() {
        let c = double_center(&Array2::from_elem((3, 3), 7.5)).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
        let c = double_center(&array![[0.0, 2.0], [2.0, 0.0]]).unwrap();
        assert_eq!(c, array![[-1.0, 1.0], [1.0, -1.0]]);
        assert!(matches!(double_center(&Array2::zeros((2, 3))), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn centering_zeroes_margins_and_matches_loops() {
        let b = random_batch(2, 5, 2);
        let m = pairwise_distances(&b);
        let c = double_center(&m).unwrap();
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..5 {
            assert!(c.row(i).sum().abs() < 1e-9 * scale);
            assert!(c.column(i).sum().abs() < 1e-9 * scale);
        }
        let mut grand = 0.0;
        for v in m.iter() {
            grand += v;
        }
        grand /= 25.0;
        for i in 0..5 {
            for j in 0..5 {
                let mut ri = 0.0;
                let mut cj = 0.0;
                for k in 0..5 {
                    ri += m[[i, k]] / 5.0;
                    cj += m[[k, j]] / 5.0;
                }
                assert!((c[[i, j]] - (m[[i, j]] - ri - cj + grand)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dcov_examples() {
        let constant = Batch2D::new(Array2::from_elem((5, 2), 0.3)).unwrap();
        let other = random_batch(4, 5, 2);
        assert_eq!(dcov(&constant, &other).unwrap(), 0.0);
        let z = random_batch(5, 6, 2);
        let a = double_center(&pairwise_distances(&z)).unwrap();
        let expect = (a.iter().map(|v| v * v).sum::<f64>() / 36.0).sqrt();
        assert!((dcov(&z, &z).unwrap() - expect).abs() < 1e-12);
        let w = random_batch(6, 6, 3);
        assert!((dcov(&z, &w).unwrap() - loop_dcov(&z, &w)).abs() < 1e-8);
        assert!(matches!(dcov(&z, &random_batch(1, 5, 2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dcor_examples() {
        let z = random_batch(7, 8, 2);
        assert!((dcor(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        let constant = Batch2D::new(Array2::from_elem((8, 2), -1.0)).unwrap();
        assert!(matches!(dcor(&constant, &z), Err(Error::DegenerateInput(_))));
        let w = random_batch(8, 8, 2);
        let oracle = loop_dcov(&z, &w) / (loop_dcov(&z, &z) * loop_dcov(&w, &w)).sqrt();
        assert!((dcor(&z, &w).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn dcor_of_independent_noise_shrinks_with_batch_size() {
        // The square-root estimator is biased upward at tiny N (about 0.68 at
        // N=8 for 2-D uniform noise), so the "small" check uses N=32.
        let mean_at = |n: usize| {
            (0..200u64)
                .map(|s| dcor(&random_batch(1000 + s, n, 2), &random_batch(5000 + s, n, 2)).unwrap())
                .sum::<f64>()
                / 200.0
        };
        let dependent = (0..200u64)
            .map(|s| {
                let z = random_batch(1000 + s, 8, 2);
                let w = Batch2D::new(z.as_array() + &(random_batch(5000 + s, 8, 2).into_inner() * 0.1)).unwrap();
                dcor(&z, &w).unwrap()
            })
            .sum::<f64>()
            / 200.0;
        let (m8, m32) = (mean_at(8), mean_at(32));
        assert!(m8 < dependent - 0.2, "independent {m8} vs dependent {dependent}");
        assert!(m32 < m8);
        assert!(m32 < 0.5, "mean dcor at N=32: {m32}");
    }

    #[test]
    fn dcor_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let z1 = random_batch(100 + seed, 5, 2);
            let z2 = random_batch(200 + seed, 5, 2);
            let (_, g) = dcor_with_grad(&z1, &z2).unwrap();
            let fd1 = fd_grad(&z1, 1e-4, &|b| dcor(b, &z2).unwrap());
            let fd2 = fd_grad(&z2, 1e-4, &|b| dcor(&z1, b).unwrap());
            assert!(max_rel_err(&g.z1, &fd1) < 1e-3);
            assert!(max_rel_err(&g.z2, &fd2) < 1e-3);
        }
    }

    #[test]
    fn dcor_gradient_at_identical_inputs_is_finite() {
        let z = random_batch(3, 6, 2);
        let (v, g) = dcor_with_grad(&z, &z).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(g.z1.iter().chain(g.z2.iter()).all(|x| x.is_finite()));
    }

    proptest! {
        #[test]
        fn dcor_translation_and_scale_invariant(seed in 0u64..1000, shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
            let z1 = random_batch(seed, 7, 2);
            let z2 = random_batch(seed + 77, 7, 3);
            let base = dcor(&z1, &z2).unwrap();
            let shifted = Batch2D::new(z1.as_array() + shift).unwrap();
            let scaled = Batch2D::new(z1.as_array() * scale).unwrap();
            prop_assert!((dcor(&shifted, &z2).unwrap() - base).abs() < 1e-9);
            prop_assert!((dcor(&scaled, &z2).unwrap() - base).abs() < 1e-9);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&base));
        }
    }
}
