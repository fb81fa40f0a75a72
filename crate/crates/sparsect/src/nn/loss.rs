//! Training losses with exact gradients.

use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Mean squared error over all elements; gradient w.r.t. the prediction.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    if pred.shape() != target.shape() {
        return Err(Error::invalid("mse shapes differ"));
    }
    let n = pred.len() as f64;
    let mut grad = Tensor4::zeros(pred.batch, pred.channels, pred.height, pred.width);
    let mut loss = 0.0;
    for i in 0..pred.len() {
        let d = pred.data[i] - target.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Binary cross-entropy straight from the logit, in the stable
/// log-sum-exp form max(z,0) - z y + ln(1 + exp(-|z|)); the gradient is
/// sigmoid(z) - y.
pub fn bce_loss(logit: f64, label: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p();
    let sigmoid = 1.0 / (1.0 + (-logit).exp());
    (loss, sigmoid - label)
}
