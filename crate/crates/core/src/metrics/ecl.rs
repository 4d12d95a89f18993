use crate::error::{Error, Result};
use crate::survival::HazardPrediction;

/// `S_{t-1} h_t` for each interval, with `S_0 = 1`.
pub fn interval_default_probabilities(hazards: &[f64]) -> Vec<f64> {
    let mut s = 1.0;
    hazards
        .iter()
        .map(|&h| {
            let p = s * h;
            s *= 1.0 - h;
            p
        })
        .collect()
}

fn check(n: usize, lgd: &[f64], ead: &[f64]) -> Result<()> {
    for v in [lgd, ead] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            });
        }
    }
    if lgd.iter().chain(ead).any(|v| !(*v >= 0.0)) {
        return Err(Error::param("lgd", "loss given default and exposure must be nonnegative"));
    }
    Ok(())
}

/// Lifetime expected credit loss `sum_t S_{t-1} h_t LGD_t EAD_t`.
pub fn expected_credit_loss(prediction: &HazardPrediction, lgd: &[f64], ead: &[f64]) -> Result<f64> {
    let h = &prediction.hazards;
    check(h.len(), lgd, ead)?;
    Ok(interval_default_probabilities(h)
        .iter()
        .zip(lgd)
        .zip(ead)
        .map(|((p, l), e)| p * l * e)
        .sum())
}

/// Same sum with the raw conditional hazard `h_t` in place of `S_{t-1} h_t`.
pub fn expected_credit_loss_conditional(prediction: &HazardPrediction, lgd: &[f64], ead: &[f64]) -> Result<f64> {
    let h = &prediction.hazards;
    check(h.len(), lgd, ead)?;
    Ok(h.iter().zip(lgd).zip(ead).map(|((p, l), e)| p * l * e).sum())
}
