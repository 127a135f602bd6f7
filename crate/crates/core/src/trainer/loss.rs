/// Mean negative log-softmax of the true class over `n × 2` logits.
pub fn cross_entropy(logits: &[f64], labels: &[u8]) -> f64 {
    cross_entropy_with_grad(logits, labels).0
}

/// Loss and its gradient with respect to the logits.
pub fn cross_entropy_with_grad(logits: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    let n = labels.len();
    debug_assert_eq!(logits.len(), 2 * n);
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (row, &y)) in logits.chunks_exact(2).zip(labels).enumerate() {
        let m = row[0].max(row[1]);
        let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
        loss += lse - row[y as usize];
        for c in 0..2 {
            let p = (row[c] - lse).exp();
            grad[2 * i + c] = (p - f64::from(u8::from(c == y as usize))) / n as f64;
        }
    }
    (loss / n as f64, grad)
}
