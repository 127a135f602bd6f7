//! Radial (ring-shaped) notch filter applied in the 2-D frequency domain.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Gain at normalized radial frequency `ρ` is `1 − s·exp(−(ρ−r₀)²/(2σ_f²))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotchSpec {
    /// Ring center as a fraction of the Nyquist radius.
    pub center: f64,
    pub strength: f64,
    /// Gaussian band width as a fraction of the Nyquist radius.
    pub width: f64,
}

impl Default for NotchSpec {
    fn default() -> Self {
        Self {
            center: 0.55,
            strength: 0.9,
            width: 0.04,
        }
    }
}

impl NotchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.center > 0.0 && self.center < 1.0) {
            return Err(Error::InvalidInput(format!("notch center {} outside (0, 1)", self.center)));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::InvalidInput(format!("notch strength {} outside [0, 1]", self.strength)));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidInput(format!("notch width {} must be positive", self.width)));
        }
        Ok(())
    }

    pub fn gain(&self, rho: f64) -> f64 {
        let d = rho - self.center;
        1.0 - self.strength * (-d * d / (2.0 * self.width * self.width)).exp()
    }
}

/// Signed frequency index of FFT bin `k` out of `n`.
fn signed(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn fft2(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for mut r in data.rows_mut() {
        let mut buf = r.to_vec();
        row.process(&mut buf);
        r.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
    }
    for mut c in data.columns_mut() {
        let mut buf = c.to_vec();
        col.process(&mut buf);
        c.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
    }
}

/// Filters one `H × W` image and clamps the real part of the result to `[0, 1]`.
///
/// Radial frequency is the bin distance from DC on the centered spectrum,
/// divided by the Nyquist radius `min(H, W) / 2`.
pub fn apply_notch(img: &Array2<f64>, spec: &NotchSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let (h, w) = img.dim();
    if h < 4 || w < 4 {
        return Err(Error::InvalidInput(format!("image {h}x{w} is smaller than 4x4")));
    }
    if img.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("image contains non-finite pixels".into()));
    }
    let mut spectrum = img.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut spectrum, false);
    let nyquist = (h.min(w) as f64) / 2.0;
    for ((ky, kx), v) in spectrum.indexed_iter_mut() {
        let rho = (signed(ky, h).powi(2) + signed(kx, w).powi(2)).sqrt() / nyquist;
        *v *= spec.gain(rho);
    }
    fft2(&mut spectrum, true);
    let scale = 1.0 / (h * w) as f64;
    Ok(spectrum.mapv(|v| (v.re * scale).clamp(0.0, 1.0)))
}

/// [`apply_notch`] on a square `f32` pixel buffer.
pub fn apply_notch_image(pixels: &[f32], side: usize, spec: &NotchSpec) -> Result<Vec<f32>> {
    let img = Array2::from_shape_fn((side, side), |(y, x)| pixels[y * side + x] as f64);
    Ok(apply_notch(&img, spec)?.iter().map(|&v| v as f32).collect())
}
