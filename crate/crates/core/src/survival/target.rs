use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// One borrower: standardized covariates, observed time and event flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub x: Vec<f64>,
    /// Observed time to default or censoring, in months.
    pub t: f64,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(x: Vec<f64>, t: f64, event: bool) -> Result<Self> {
        let r = Self { x, t, event };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::InvalidRecord(format!("observed time {} is not a nonnegative number", self.t)));
        }
        if let Some(i) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(format!("covariate {i} is not finite")));
        }
        Ok(())
    }

    /// Applies the fixed observation window: defaults observed after
    /// `horizon` become censored at `horizon`.
    pub fn truncated(mut self, horizon: f64) -> Self {
        if self.t > horizon {
            self.t = horizon;
            self.event = false;
        }
        self
    }
}

/// Survival and failure indicator vectors over the `T` intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretizedTarget {
    pub surv: Vec<bool>,
    pub fail: Vec<bool>,
}

impl DiscretizedTarget {
    pub fn len(&self) -> usize {
        self.surv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surv.is_empty()
    }

    /// Zero-based interval of the failure bit, if any.
    pub fn failure_interval(&self) -> Option<usize> {
        self.fail.iter().position(|&f| f)
    }

    /// Checks the prefix-of-ones and single-failure-bit structure.
    pub fn is_well_formed(&self) -> bool {
        if self.surv.len() != self.fail.len() {
            return false;
        }
        let ones = self.surv.iter().take_while(|&&s| s).count();
        if self.surv[ones..].iter().any(|&s| s) {
            return false;
        }
        match self.fail.iter().filter(|&&f| f).count() {
            0 => true,
            1 => self.failure_interval() == Some(ones),
            _ => false,
        }
    }
}

/// A record paired with its discretized target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub record: SurvivalRecord,
    pub target: DiscretizedTarget,
}

impl Example {
    pub fn new(record: SurvivalRecord, grid: &TimeGrid) -> Result<Self> {
        let target = discretize(&record, grid)?;
        Ok(Self { record, target })
    }
}

/// Builds the survival/failure indicator vectors for one record.
///
/// Events fall in the interval `tau_{j-1} <= t < tau_j`; an event exactly at
/// `tau_T` is clamped into the last interval and events after `tau_T` are
/// treated as censored at `tau_T`. Censored records survive interval `l`
/// when `t` reaches its midpoint.
pub fn discretize(record: &SurvivalRecord, grid: &TimeGrid) -> Result<DiscretizedTarget> {
    record.validate()?;
    let n = grid.intervals();
    let mut surv = vec![false; n];
    let mut fail = vec![false; n];
    let horizon = grid.horizon();

    if record.event && record.t <= horizon {
        let j = grid.interval_of(record.t).unwrap_or(n - 1);
        surv[..j].iter_mut().for_each(|s| *s = true);
        fail[j] = true;
    } else {
        let t = record.t.min(horizon);
        for (l, s) in surv.iter_mut().enumerate() {
            *s = t >= grid.midpoint(l);
        }
    }
    Ok(DiscretizedTarget { surv, fail })
}
