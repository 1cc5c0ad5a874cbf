/// Binary cross-entropy of a logit against a 0/1 label,
/// `softplus(z) - y * z`, evaluated without overflow.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Derivative of [`bce_with_logit`] with respect to the logit.
pub fn bce_with_logit_grad(logit: f64, label: f64) -> f64 {
    sigmoid(logit) - label
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
