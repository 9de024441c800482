/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[label]`
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "label out of range");
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    -(logits[label] - max - log_sum)
}

/// Loss and its gradient `softmax(logits) − onehot(label)`.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = cross_entropy_loss(logits, label);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let loss = cross_entropy_loss(&[0.7, 0.7, 0.7, 0.7], 2);
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        let loss = cross_entropy_loss(&[30.0, -30.0], 0);
        assert!(loss <= 1e-12, "loss {loss}");
    }

    #[test]
    fn matches_direct_formula() {
        let logits: [f64; 5] = [0.3, -1.2, 2.1, 0.0, -0.4];
        for label in 0..logits.len() {
            let direct = -(logits[label].exp() / logits.iter().map(|l| l.exp()).sum::<f64>()).ln();
            let stable = cross_entropy_loss(&logits, label);
            assert!((direct - stable).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_softmax_minus_onehot() {
        let logits = [1.0, 2.0, 3.0];
        let (_, grad) = cross_entropy_with_grad(&logits, 1);
        let p = softmax(&logits);
        assert!((grad[0] - p[0]).abs() < 1e-15);
        assert!((grad[1] - (p[1] - 1.0)).abs() < 1e-15);
        assert!((grad[2] - p[2]).abs() < 1e-15);
        // Gradient sums to zero.
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }
}
