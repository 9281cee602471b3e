use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_total = logits.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    let loss = log_total - (logits[label] - max);
    let mut grad = softmax(logits);
    grad[label] -= T::one();
    Ok((loss, grad))
}
