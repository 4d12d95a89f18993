use super::model::HazardPrediction;
use super::target::DiscretizedTarget;
use crate::error::{Error, Result};

/// Hazards are clamped to `[HAZARD_CLAMP, 1 - HAZARD_CLAMP]` inside the loss
/// and its gradient.
pub const HAZARD_CLAMP: f64 = 1e-7;

fn clamp(h: f64) -> f64 {
    h.clamp(HAZARD_CLAMP, 1.0 - HAZARD_CLAMP)
}

/// Negative log-likelihood `-sum_l [s_surv log(1-h) + s_fail log h]`.
pub fn nll_loss(prediction: &HazardPrediction, target: &DiscretizedTarget) -> Result<f64> {
    let h = &prediction.hazards;
    if h.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            actual: h.len(),
        });
    }
    Ok(nll_unchecked(h, target))
}

pub(crate) fn nll_unchecked(h: &[f64], target: &DiscretizedTarget) -> f64 {
    let mut loss = 0.0;
    for ((&h, &s), &f) in h.iter().zip(&target.surv).zip(&target.fail) {
        let h = clamp(h);
        if s {
            loss -= (1.0 - h).ln();
        }
        if f {
            loss -= h.ln();
        }
    }
    loss
}

/// Derivative of the loss with respect to output logit `z_l`, where
/// `h_l = sigmoid(z_l)`: `s_surv h - s_fail (1 - h)`.
pub fn logit_gradient(h: f64, surv: bool, fail: bool) -> f64 {
    let h = clamp(h);
    let mut g = 0.0;
    if surv {
        g += h;
    }
    if fail {
        g -= 1.0 - h;
    }
    g
}
