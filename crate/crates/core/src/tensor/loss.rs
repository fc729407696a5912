//! Classification loss.

use super::{Tensor, TensorData};

/// Mean softmax cross-entropy of `(B, K)` logits against integer labels.
///
/// Forward uses the log-sum-exp trick; backward is the fused
/// `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Tensor {
    let v = logits.value();
    assert!(
        v.shape.len() == 2,
        "softmax_cross_entropy: logits must be (B, K), got {:?}",
        v.shape
    );
    let (b, k) = (v.shape[0], v.shape[1]);
    assert_eq!(
        b,
        labels.len(),
        "softmax_cross_entropy: {} logit rows vs {} labels",
        b,
        labels.len()
    );
    let mut probs = vec![0.0f32; b * k];
    let mut total = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        assert!(
            y < k,
            "softmax_cross_entropy: label {y} out of range for {k} classes"
        );
        let row = &v.data[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f64;
        for &x in row {
            denom += ((x - max) as f64).exp();
        }
        let log_denom = denom.ln();
        for (j, &x) in row.iter().enumerate() {
            probs[i * k + j] = (((x - max) as f64 - log_denom).exp()) as f32;
        }
        total += log_denom - (row[y] - max) as f64;
    }
    let loss = (total / b as f64) as f32;

    let p = logits.idx();
    let labels_owned: Vec<usize> = labels.to_vec();
    let backward = Box::new(
        move |_values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
            let scale = grad.data[0] / b as f32;
            let mut g = vec![0.0; b * k];
            for (i, &y) in labels_owned.iter().enumerate() {
                for j in 0..k {
                    let onehot = if j == y { 1.0 } else { 0.0 };
                    g[i * k + j] = (probs[i * k + j] - onehot) * scale;
                }
            }
            sink(p, g);
        },
    );
    logits.tape().push(
        "softmax_cross_entropy",
        TensorData::scalar(loss),
        vec![p],
        Some(backward),
        None,
    )
}

/// Argmax per row of `(B, K)` logits.
pub fn argmax_rows(logits: &TensorData) -> Vec<usize> {
    assert!(logits.shape.len() == 2, "argmax_rows: need (B, K) input");
    let (b, k) = (logits.shape[0], logits.shape[1]);
    (0..b)
        .map(|i| {
            let row = &logits.data[i * k..(i + 1) * k];
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap()
        })
        .collect()
}
