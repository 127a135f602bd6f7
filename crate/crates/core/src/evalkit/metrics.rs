use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann-Whitney U statistic, with tied
/// scores sharing their midrank (each tie counts ½).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n0 as f64 * n1 as f64))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Percent of test points whose `k` nearest training latents (Euclidean)
/// vote for the right label. A split vote goes to label 0; equal distances
/// are broken by training index.
pub fn knn_accuracy(train: ArrayView2<f64>, train_labels: &[u8], test: ArrayView2<f64>, test_labels: &[u8], k: usize) -> Result<f64> {
    if train.nrows() != train_labels.len() || test.nrows() != test_labels.len() {
        return Err(Error::ShapeMismatch("latent rows and labels differ in length".into()));
    }
    if train.ncols() != test.ncols() {
        return Err(Error::ShapeMismatch(format!("train dim {} vs test dim {}", train.ncols(), test.ncols())));
    }
    if k == 0 || train.nrows() < k {
        return Err(Error::InvalidInput(format!("kNN with k={k} needs at least k training points, got {}", train.nrows())));
    }
    if test.nrows() == 0 {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let train_rows: Vec<Vec<f64>> = train.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut correct = 0usize;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train_rows.len());
    for (row, &truth) in test.rows().into_iter().zip(test_labels) {
        let q = row.to_vec();
        dist.clear();
        dist.extend(train_rows.iter().enumerate().map(|(i, t)| (sq_dist(&q, t), i)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let ones = dist[..k].iter().filter(|(_, i)| train_labels[*i] == 1).count();
        let vote = u8::from(2 * ones > k);
        correct += usize::from(vote == truth);
    }
    Ok(100.0 * correct as f64 / test.nrows() as f64)
}

/// Mean and sample standard deviation (`n − 1`; zero for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
