use super::concordance::PredictedSurvival;
use super::km::{check_lengths, KmCurve};
use crate::error::{Error, Result};

/// Censoring weights below this are raised to it.
pub const IPCW_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrierScore {
    pub value: f64,
    /// Weights that hit [`IPCW_FLOOR`].
    pub clamped: usize,
}

fn weight(g: f64, clamped: &mut usize) -> f64 {
    if g < IPCW_FLOOR {
        *clamped += 1;
        IPCW_FLOOR
    } else {
        g
    }
}

/// IPCW Brier score at `t_star`. `g` is the censoring survival estimate
/// from the training data, read just before each event time and at `t_star`.
pub fn brier_at(t_star: f64, pred: &PredictedSurvival, times: &[f64], events: &[bool], g: &KmCurve) -> Result<BrierScore> {
    check_lengths(times, events)?;
    if pred.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: pred.len(),
        });
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("evaluation records"));
    }
    let mut clamped = 0;
    let g_star = g.at(t_star);
    let mut sum = 0.0;
    for i in 0..times.len() {
        let s = pred.at(i, t_star);
        if times[i] <= t_star && events[i] {
            sum += s * s / weight(g.at_left(times[i]), &mut clamped);
        } else if times[i] > t_star {
            sum += (1.0 - s) * (1.0 - s) / weight(g_star, &mut clamped);
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} censoring weight(s) clamped to {IPCW_FLOOR} at t = {t_star}");
    }
    Ok(BrierScore {
        value: sum / times.len() as f64,
        clamped,
    })
}

/// Trapezoid integral of `scores` over `horizons`, divided by the span.
pub fn integrated_brier(horizons: &[f64], scores: &[f64]) -> Result<f64> {
    if horizons.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: horizons.len(),
            actual: scores.len(),
        });
    }
    if horizons.len() < 2 {
        return Err(Error::param("horizons", "need at least two horizons"));
    }
    let span = horizons[horizons.len() - 1] - horizons[0];
    if !(span > 0.0) {
        return Err(Error::param("horizons", "must be strictly increasing"));
    }
    let area: f64 = horizons
        .windows(2)
        .zip(scores.windows(2))
        .map(|(t, b)| (t[1] - t[0]) * (b[0] + b[1]) / 2.0)
        .sum();
    Ok(area / span)
}
