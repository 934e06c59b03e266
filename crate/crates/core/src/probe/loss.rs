use crate::linalg;

/// Confidence-weighted cross-entropy against a pseudo-label.
///
/// `loss = -weight · log softmax(logits)[target]` and
/// `grad = weight · (softmax(logits) - onehot(target))`, written into `grad`.
pub fn consistency_loss_into(logits: &[f64], target: usize, weight: f64, grad: &mut [f64]) -> f64 {
    debug_assert_eq!(logits.len(), grad.len());
    if weight == 0.0 {
        grad.fill(0.0);
        return 0.0;
    }
    let lse = linalg::log_sum_exp(logits);
    for (g, l) in grad.iter_mut().zip(logits) {
        *g = weight * (l - lse).exp();
    }
    grad[target] -= weight;
    weight * (lse - logits[target])
}

/// Allocating form of [`consistency_loss_into`].
pub fn consistency_loss(logits: &[f64], target: usize, weight: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; logits.len()];
    let loss = consistency_loss_into(logits, target, weight, &mut grad);
    (loss, grad)
}
