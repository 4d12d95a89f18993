//! Survival evaluation: Kaplan-Meier curves, time-dependent concordance,
//! IPCW Brier scores, calibration curves and expected credit loss.

mod brier;
mod calibration;
mod concordance;
mod ecl;
mod km;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use brier::{brier_at, integrated_brier, BrierScore, IPCW_FLOOR};
pub use calibration::{calibration_curve, write_calibration_csv, CalibrationPoint};
pub use concordance::{c_index_at, c_index_brute_force, mean_c_index, pair_counts, PairCounts, PredictedSurvival};
pub use ecl::{expected_credit_loss, expected_credit_loss_conditional, interval_default_probabilities};
pub use km::{censoring_km, kaplan_meier, KmCurve};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::survival::TimeGrid;

/// Strictly increasing evaluation horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvalTimes {
    times: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EvalTimes {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EvalTimes> for Vec<f64> {
    fn from(e: EvalTimes) -> Self {
        e.times
    }
}

impl EvalTimes {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyInput("evaluation times"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("eval_times", "must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    /// Grid right endpoints inside `[first event time, 95th percentile of
    /// observed times]`.
    pub fn default_for(grid: &TimeGrid, times: &[f64], events: &[bool]) -> Result<Self> {
        km::check_lengths(times, events)?;
        let first_event = times
            .iter()
            .zip(events)
            .filter(|(_, e)| **e)
            .map(|(t, _)| *t)
            .fold(f64::INFINITY, f64::min);
        if first_event.is_infinite() {
            return Err(Error::EmptyInput("events for evaluation horizons"));
        }
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        let p95 = sorted[rank - 1];
        let picked: Vec<f64> = grid
            .right_endpoints()
            .iter()
            .copied()
            .filter(|&t| t >= first_event && t <= p95)
            .collect();
        Self::new(picked)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Metrics at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub time: f64,
    pub c_index: Option<f64>,
    pub admissible_pairs: u64,
    pub brier: f64,
    pub events_by: usize,
    pub at_risk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub events: usize,
    pub horizons: Vec<HorizonMetrics>,
    pub mean_c_index: Option<f64>,
    pub undefined_horizons: usize,
    /// `None` with fewer than two horizons.
    pub ibs: Option<f64>,
    pub ipcw_clamped: usize,
}

impl MetricReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            time: f64,
            c_index: Option<f64>,
            admissible_pairs: u64,
            brier: f64,
            events_by: usize,
            at_risk: usize,
        }
        let mut w = csv::Writer::from_writer(out);
        for h in &self.horizons {
            w.serialize(Row {
                time: h.time,
                c_index: h.c_index,
                admissible_pairs: h.admissible_pairs,
                brier: h.brier,
                events_by: h.events_by,
                at_risk: h.at_risk,
            })?;
        }
        w.flush().map_err(|e| Error::io("metrics csv", e))?;
        Ok(())
    }
}

/// Every metric on one evaluation set. `g` is the censoring estimate from training data.
pub fn evaluate(
    pred: &PredictedSurvival,
    times: &[f64],
    events: &[bool],
    g: &KmCurve,
    eval: &EvalTimes,
    exec: Execution,
) -> Result<MetricReport> {
    if times.is_empty() {
        return Err(Error::EmptyInput("evaluation records"));
    }
    let hs = eval.times();
    let pairs = pair_counts(hs, pred, times, events, exec)?;
    let briers = exec.map(hs, |&t| brier_at(t, pred, times, events, g));
    let briers = briers.into_iter().collect::<Result<Vec<_>>>()?;
    let horizons: Vec<HorizonMetrics> = hs
        .iter()
        .zip(&pairs)
        .zip(&briers)
        .map(|((&t, p), b)| HorizonMetrics {
            time: t,
            c_index: p.c_index(),
            admissible_pairs: p.admissible,
            brier: b.value,
            events_by: times.iter().zip(events).filter(|(ti, e)| **e && **ti <= t).count(),
            at_risk: times.iter().filter(|ti| **ti > t).count(),
        })
        .collect();
    let c_values: Vec<Option<f64>> = horizons.iter().map(|h| h.c_index).collect();
    let (mean_c_index, undefined_horizons) = concordance::mean_defined(&c_values);
    let scores: Vec<f64> = briers.iter().map(|b| b.value).collect();
    let ibs = if hs.len() >= 2 { Some(integrated_brier(hs, &scores)?) } else { None };
    Ok(MetricReport {
        n: times.len(),
        events: events.iter().filter(|e| **e).count(),
        horizons,
        mean_c_index,
        undefined_horizons,
        ibs,
        ipcw_clamped: briers.iter().map(|b| b.clamped).sum(),
    })
}
