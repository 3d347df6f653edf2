use super::{Real, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    pub probs: [T; NUM_CLASSES],
    pub logit_grads: [T; NUM_CLASSES],
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &[T; NUM_CLASSES]) -> [T; NUM_CLASSES] {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps = logits.map(|z| (z - max).exp());
    let total: T = exps.iter().copied().sum();
    exps.map(|e| e / total)
}

/// Multinomial cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &[T; NUM_CLASSES],
    label: usize,
) -> Result<LossOutput<T>> {
    if label >= NUM_CLASSES {
        return Err(Error::domain(format!("label {label} is not a class index")));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let shifted = logits.map(|z| z - max);
    let log_total = shifted.iter().map(|z| z.exp()).sum::<T>().ln();
    let probs = shifted.map(|z| (z - log_total).exp());
    let loss = log_total - shifted[label];
    let mut logit_grads = probs;
    logit_grads[label] = logit_grads[label] - T::one();
    Ok(LossOutput {
        loss,
        probs,
        logit_grads,
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
