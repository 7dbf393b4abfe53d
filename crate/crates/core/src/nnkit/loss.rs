use super::layers::sigmoid;

/// Binary cross-entropy evaluated from a logit.
///
/// Returns `(loss, d loss / d logit)`. The loss is computed as
/// `max(z, 0) - z*y + ln(1 + e^-|z|)`, which never takes the log of zero.
pub fn bce_with_logit(logit: f64, label: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - label)
}

/// Binary cross-entropy from a probability (clamped away from 0 and 1).
pub fn bce(p: f64, label: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}
