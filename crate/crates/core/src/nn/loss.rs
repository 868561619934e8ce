use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tabular::{StageLabel, NUM_STAGES};

use super::Tensor;

/// Max-shifted softmax. Entries that would underflow to zero are floored at the
/// smallest positive normal so every probability stays strictly positive.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::from_vec(
        exps.into_iter()
            .map(|e| (e / total).max(T::min_positive_value()))
            .collect(),
    )
}

/// Cross-entropy output: loss, probabilities and the logit gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    pub dlogits: Tensor<T>,
}

/// `loss = −ln p[label]`, `dlogits = p − onehot(label)`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    label: StageLabel,
) -> Result<CrossEntropy<T>> {
    if logits.len() != NUM_STAGES {
        return Err(Error::Shape(format!(
            "expected {NUM_STAGES} logits, got {}",
            logits.len()
        )));
    }
    let probs = softmax(logits);
    let k = label.index();
    // log-sum-exp form keeps the loss finite even when p[label] underflows
    let max = logits.data().iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max
        + logits
            .data()
            .iter()
            .map(|&z| (z - max).exp())
            .sum::<T>()
            .ln();
    let loss = lse - logits.data()[k];
    let mut d = probs.data().to_vec();
    d[k] -= T::one();
    Ok(CrossEntropy {
        loss,
        probs,
        dlogits: Tensor::from_vec(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(i: u8) -> StageLabel {
        StageLabel::new(i).unwrap()
    }

    #[test]
    fn equal_logits() {
        let ce = softmax_cross_entropy(&Tensor::from_vec(vec![0.3f64; 5]), stage(2)).unwrap();
        for &p in ce.probs.data() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert!((ce.loss - 5f64.ln()).abs() < 1e-12);
        assert!((ce.loss - 1.60944).abs() < 1e-5);
        let want = [0.2, 0.2, -0.8, 0.2, 0.2];
        for (d, w) in ce.dlogits.data().iter().zip(want) {
            assert!((d - w).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_logit() {
        let ce =
            softmax_cross_entropy(&Tensor::from_vec(vec![10.0f64, 0.0, 0.0, 0.0, 0.0]), stage(0))
                .unwrap();
        let want = (1.0 + 4.0 * (-10f64).exp()).ln();
        assert!((ce.loss - want).abs() < 1e-15);
        assert!((ce.loss - 1.8e-4).abs() < 1e-5);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let ce = softmax_cross_entropy(
            &Tensor::from_vec(vec![1e3f64, -1e3, 999.0, 0.0, 1e3]),
            stage(1),
        )
        .unwrap();
        assert!(ce.loss.is_finite());
        let s: f64 = ce.probs.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(ce.probs.data().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn wrong_width_rejected() {
        assert!(softmax_cross_entropy(&Tensor::from_vec(vec![0.0f64; 4]), stage(0)).is_err());
        assert!(StageLabel::new(5).is_err());
    }
}
