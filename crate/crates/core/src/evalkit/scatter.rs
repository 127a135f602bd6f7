use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

const CANVAS: f64 = 600.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

fn check(z: &ArrayView2<f64>, labels: &[u8]) -> Result<()> {
    if z.ncols() != 2 {
        return Err(Error::InvalidInput(format!("scatter export needs a 2-D subspace, got {} columns", z.ncols())));
    }
    if z.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} points, {} labels", z.nrows(), labels.len())));
    }
    Ok(())
}

pub fn scatter_csv(z: ArrayView2<f64>, labels: &[u8]) -> Result<String> {
    check(&z, labels)?;
    let mut out = String::from("x,y,label\n");
    for (row, y) in z.rows().into_iter().zip(labels) {
        writeln!(out, "{},{},{}", row[0], row[1], y).unwrap();
    }
    Ok(out)
}

fn axis(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// 600×600 SVG, axes fitted to the data bounding box plus a 5% margin,
/// one marker colour per label.
pub fn scatter_svg(z: ArrayView2<f64>, labels: &[u8]) -> Result<String> {
    check(&z, labels)?;
    let (x0, x1) = axis(z.column(0).iter().copied());
    let (y0, y1) = axis(z.column(1).iter().copied());
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="600" viewBox="0 0 600 600">"#).unwrap();
    writeln!(out, r#"<rect width="600" height="600" fill="white"/>"#).unwrap();
    for (row, &y) in z.rows().into_iter().zip(labels) {
        let px = (row[0] - x0) / (x1 - x0) * CANVAS;
        let py = CANVAS - (row[1] - y0) / (y1 - y0) * CANVAS;
        let color = COLORS[usize::from(y != 0)];
        writeln!(out, r#"<circle cx="{px:.3}" cy="{py:.3}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#).unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn scatter_export(z: ArrayView2<f64>, labels: &[u8], stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv = scatter_csv(z, labels)?;
    let svg = scatter_svg(z, labels)?;
    // Appended, not `with_extension`: stems like `erm_p0.95` contain dots.
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let (csv_path, svg_path) = (with(".csv"), with(".svg"));
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&csv_path, csv)?;
    fs::write(&svg_path, svg)?;
    Ok((csv_path, svg_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn empty_export() {
        let z = Array2::<f64>::zeros((0, 2));
        assert_eq!(scatter_csv(z.view(), &[]).unwrap(), "x,y,label\n");
        let svg = scatter_svg(z.view(), &[]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn rows_and_determinism() {
        let z = Array2::from_shape_fn((7, 2), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let labels = [0, 1, 0, 1, 1, 0, 0];
        assert_eq!(scatter_csv(z.view(), &labels).unwrap().lines().count(), 8);
        let dir = tempfile::tempdir().unwrap();
        let (c1, s1) = scatter_export(z.view(), &labels, &dir.path().join("a")).unwrap();
        let (a, b) = (fs::read(&c1).unwrap(), fs::read(&s1).unwrap());
        scatter_export(z.view(), &labels, &dir.path().join("a")).unwrap();
        assert_eq!(a, fs::read(&c1).unwrap());
        assert_eq!(b, fs::read(&s1).unwrap());
        let svg = String::from_utf8(b).unwrap();
        assert_eq!(svg.matches("<circle").count(), 7);
        assert!(svg.contains(COLORS[0]) && svg.contains(COLORS[1]));
    }

    #[test]
    fn dotted_stems_keep_their_suffix() {
        let z = Array2::<f64>::zeros((2, 2));
        let dir = tempfile::tempdir().unwrap();
        let (c, s) = scatter_export(z.view(), &[0, 1], &dir.path().join("scatter_erm_p0.95")).unwrap();
        assert_eq!(c.file_name().unwrap(), "scatter_erm_p0.95.csv");
        assert_eq!(s.file_name().unwrap(), "scatter_erm_p0.95.svg");
    }

    #[test]
    fn markers_stay_on_canvas() {
        let z = Array2::from_shape_vec((3, 2), vec![-5.0, 2.0, 10.0, 2.0, 0.0, 2.0]).unwrap();
        let svg = scatter_svg(z.view(), &[0, 1, 0]).unwrap();
        for line in svg.lines().filter(|l| l.starts_with("<circle")) {
            let num = |key: &str| -> f64 {
                let rest = &line[line.find(key).unwrap() + key.len()..];
                rest[..rest.find('"').unwrap()].parse().unwrap()
            };
            // 5% of the span on each side: the extremes land at 600·0.05/1.1.
            let edge = 600.0 * 0.05 / 1.1;
            assert!((edge - 1e-3..=600.0 - edge + 1e-3).contains(&num("cx=\"")));
            assert!((0.0..=600.0).contains(&num("cy=\"")));
        }
    }

    #[test]
    fn wrong_dim() {
        let z = Array2::<f64>::zeros((3, 3));
        assert!(matches!(scatter_csv(z.view(), &[0, 0, 0]), Err(Error::InvalidInput(_))));
    }
}
