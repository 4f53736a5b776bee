use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

/// Mean of squared differences.
pub fn mse(predictions: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Shape {
            op: "mse",
            lhs: predictions.shape().to_vec(),
            rhs: targets.shape().to_vec(),
        });
    }
    predictions.sub(targets)?.square()?.mean()
}

/// Mean over rows of `-log softmax(logits)[target]`, using
/// `logsumexp(row) - row[target]`.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let &[batch, classes] = logits.shape() else {
        return Err(Error::Shape {
            op: "softmax_cross_entropy",
            lhs: logits.shape().to_vec(),
            rhs: vec![targets.len()],
        });
    };
    if targets.len() != batch {
        return Err(Error::Validation(format!(
            "{} targets for {batch} rows of logits",
            targets.len()
        )));
    }
    if batch == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut onehot = vec![0.0; batch * classes];
    for (row, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::Validation(format!(
                "target {t} out of range for {classes} classes"
            )));
        }
        onehot[row * classes + t] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, &[batch, classes])?;
    let picked = logits.mul(&onehot)?.sum()?;
    logits
        .log_sum_exp()?
        .sum()?
        .sub(&picked)?
        .scale(1.0 / batch as f64)
}
