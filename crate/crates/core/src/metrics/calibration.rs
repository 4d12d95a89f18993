use std::io::Write;

use serde::{Deserialize, Serialize};

use super::concordance::PredictedSurvival;
use super::km::kaplan_meier;
use crate::error::{Error, Result};

/// One row of a calibration plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub time: f64,
    pub km: f64,
    pub km_lo: f64,
    pub km_hi: f64,
    pub model_mean: f64,
}

impl CalibrationPoint {
    pub fn within_band(&self) -> bool {
        self.km_lo <= self.model_mean && self.model_mean <= self.km_hi
    }
}

/// Mean predicted survival against the KM estimate and its 95% band at `points`.
pub fn calibration_curve(pred: &PredictedSurvival, times: &[f64], events: &[bool], points: &[f64]) -> Result<Vec<CalibrationPoint>> {
    if pred.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: pred.len(),
        });
    }
    let km = kaplan_meier(times, events)?;
    Ok(points
        .iter()
        .map(|&t| {
            let (km_lo, km_hi) = km.band(t);
            let model_mean = (0..pred.len()).map(|i| pred.at(i, t)).sum::<f64>() / pred.len() as f64;
            CalibrationPoint {
                time: t,
                km: km.at(t),
                km_lo,
                km_hi,
                model_mean,
            }
        })
        .collect())
}

pub fn write_calibration_csv<W: Write>(points: &[CalibrationPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("calibration csv", e))?;
    Ok(())
}
