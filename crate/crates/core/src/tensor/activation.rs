use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Floor applied to the true-class probability before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `grad` where `input > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad.shape() {
        return Err(Error::shape(
            "relu_backward",
            "grad",
            format!("{:?}", input.shape()),
            format!("{:?}", grad.shape()),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

fn rows(op: &'static str, t: &[usize]) -> Result<(usize, usize)> {
    match *t {
        [n, c] => Ok((n, c)),
        _ => Err(Error::shape(op, "rank", 2, t.len())),
    }
}

/// Row-wise softmax of an N×C logits tensor (max-subtracted).
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = rows("softmax", logits.shape())?;
    if c < 2 {
        return Err(Error::invalid("softmax", "need at least two classes"));
    }
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec(logits.shape(), out)
}

fn check_onehot<T: Real>(op: &'static str, probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<(usize, usize)> {
    let (n, c) = rows(op, probs.shape())?;
    if onehot.shape() != probs.shape() {
        return Err(Error::shape(
            op,
            "onehot",
            format!("{:?}", probs.shape()),
            format!("{:?}", onehot.shape()),
        ));
    }
    if n == 0 {
        return Err(Error::Empty("cross_entropy batch"));
    }
    for (i, row) in onehot.data().chunks_exact(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == T::one()).count();
        let zeros = row.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || zeros != c - 1 {
            return Err(Error::invalid(op, format!("row {i} is not a one-hot vector")));
        }
    }
    Ok((n, c))
}

/// Mean over the batch of `-ln p[true class]`, with the probability clamped
/// at [`LOG_CLAMP`].
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<T> {
    let (n, c) = check_onehot("cross_entropy", probs, onehot)?;
    let clamp = T::of_f64(LOG_CLAMP);
    let mut total = T::zero();
    for (p, y) in probs.data().chunks_exact(c).zip(onehot.data().chunks_exact(c)) {
        let k = y.iter().position(|&v| v == T::one()).unwrap_or(0);
        total -= p[k].max(clamp).ln();
    }
    Ok(total / T::of_f64(n as f64))
}

/// Gradient of `cross_entropy(softmax(logits), onehot)` w.r.t. the logits:
/// `(probs - onehot) / N`.
pub fn softmax_cross_entropy_backward<T: Real>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, _) = check_onehot("softmax_cross_entropy_backward", probs, onehot)?;
    let inv = T::one() / T::of_f64(n as f64);
    let data = probs
        .data()
        .iter()
        .zip(onehot.data())
        .map(|(&p, &y)| (p - y) * inv)
        .collect();
    Tensor::from_vec(probs.shape(), data)
}
