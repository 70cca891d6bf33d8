use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Probabilities below this are clamped before the log.
pub const PROB_FLOOR: f64 = 1e-7;

/// Row-wise softmax of a `B×C` tensor, max-subtracted.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    logits.expect_rank(2, "softmax input")?;
    let classes = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(classes) {
        let max = row
            .iter()
            .map(|v| v.to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| S::from_f64(e / total)));
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean categorical cross-entropy of one-hot `targets` under
/// `softmax(logits)`. Returns the loss and the probabilities.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    targets: &Tensor<S>,
) -> Result<(f64, Tensor<S>)> {
    targets.expect_shape(logits.shape(), "cross-entropy targets")?;
    let probs = softmax(logits)?;
    let loss = cross_entropy_of_probs(&probs, targets)?;
    Ok((loss, probs))
}

/// Cross-entropy from already-normalised probabilities.
pub fn cross_entropy_of_probs<S: Scalar>(probs: &Tensor<S>, targets: &Tensor<S>) -> Result<f64> {
    probs.expect_rank(2, "cross-entropy probabilities")?;
    targets.expect_shape(probs.shape(), "cross-entropy targets")?;
    let batch = probs.shape()[0];
    let mut total = 0f64;
    for (p, t) in probs.data().iter().zip(targets.data()) {
        let t = t.to_f64();
        if t != 0.0 {
            total -= t * p.to_f64().max(PROB_FLOOR).ln();
        }
    }
    let loss = total / batch as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok(loss)
}

/// Gradient of the mean loss with respect to the logits: `(probs − targets) / B`.
pub fn softmax_cross_entropy_backward<S: Scalar>(
    probs: &Tensor<S>,
    targets: &Tensor<S>,
) -> Result<Tensor<S>> {
    probs.expect_rank(2, "cross-entropy probabilities")?;
    targets.expect_shape(probs.shape(), "cross-entropy targets")?;
    let batch = probs.shape()[0] as f64;
    let data = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| S::from_f64((p.to_f64() - t.to_f64()) / batch))
        .collect();
    Tensor::new(probs.shape().to_vec(), data)
}
