//! AUROC with ties and kNN accuracy on synthetic scores/embeddings.

use disbench::evalkit::{auroc, knn_accuracy, mean_sd};
use ndarray::Array2;

fn main() -> disbench::Result<()> {
    let scores = [0.1, 0.4, 0.4, 0.35, 0.8, 0.9];
    let labels = [0, 0, 1, 1, 1, 1];
    println!("auroc = {:.4}", auroc(&scores, &labels)?);

    // Two clusters along x; labels follow the cluster.
    let pts = Array2::from_shape_fn((40, 2), |(i, j)| if j == 0 { (i % 2) as f64 * 5.0 + (i as f64 * 0.37).sin() } else { (i as f64 * 0.71).cos() });
    let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
    let (train, test) = (pts.slice(ndarray::s![..20, ..]), pts.slice(ndarray::s![20.., ..]));
    println!("knn accuracy = {:.1}%", knn_accuracy(train, &y[..20], test, &y[20..], 5)?);

    let (m, s) = mean_sd(&[71.2, 69.8, 73.4, 70.1, 72.0]);
    println!("fold mean {m:.2} ± {s:.2}");
    Ok(())
}
