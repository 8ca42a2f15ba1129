//! Softmax cross-entropy with log-sum-exp stabilization.

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of `logits` against an integer class label, computed as
/// `logsumexp(logits) - logits[label]`. Always finite and >= 0 for finite
/// logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            num_classes: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("cross-entropy logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    Ok(max + sum.ln() - logits[label])
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<Vec<f64>> {
    if label >= logits.len() {
        return Err(Error::InvalidLabel {
            label,
            num_classes: logits.len(),
        });
    }
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = vec![0.25; 10];
        let s = cross_entropy(&logits, 3).unwrap();
        assert!((s - 2.302585092994046).abs() < 1e-12); // ln 10
    }

    #[test]
    fn saturated_correct_class_is_near_zero() {
        let s = cross_entropy(&[50.0, 0.0, 0.0], 0).unwrap();
        assert!(s >= 0.0);
        assert!(s < 1e-9);
    }

    #[test]
    fn matches_independent_softmax_script() {
        // frozen from a direct softmax-formula evaluation
        let s = cross_entropy(&[1.0, 2.0, 0.5], 1).unwrap();
        assert!((s - 0.46436878410794513).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        assert!(matches!(
            cross_entropy(&[0.0, 0.0], 2).unwrap_err(),
            Error::InvalidLabel { .. }
        ));
    }

    #[test]
    fn gradient_sums_to_zero() {
        let g = cross_entropy_grad(&[1.0, -2.0, 0.3], 2).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn never_nan_for_bounded_logits(
            logits in prop::collection::vec(-1e3f64..1e3, 1..8),
            label_pick in 0usize..8,
        ) {
            let label = label_pick % logits.len();
            let s = cross_entropy(&logits, label).unwrap();
            prop_assert!(s.is_finite());
            prop_assert!(s >= 0.0);
            let probs = softmax(&logits);
            prop_assert!(probs.iter().all(|p| p.is_finite()));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
