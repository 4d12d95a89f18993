use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Product-limit estimate over the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    /// Estimate just after each time in `times`.
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Running Greenwood sum `sum d / (n (n - d))`.
    greenwood: Vec<f64>,
}

impl KmCurve {
    fn index_le(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// Right-continuous value at `t`.
    pub fn at(&self, t: f64) -> f64 {
        match self.index_le(t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// Value just before `t`.
    pub fn at_left(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s < t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// Pointwise 95% Greenwood band at `t`, clipped to `[0, 1]`.
    pub fn band(&self, t: f64) -> (f64, f64) {
        let s = self.at(t);
        let var = match self.index_le(t) {
            0 => 0.0,
            _ if s == 0.0 => 0.0,
            k => s * s * self.greenwood[k - 1],
        };
        let half = 1.96 * var.sqrt();
        ((s - half).max(0.0), (s + half).min(1.0))
    }
}

fn product_limit(times: &[f64], is_event: impl Fn(usize) -> bool) -> Result<KmCurve> {
    if times.is_empty() {
        return Err(Error::EmptyInput("survival times"));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidRecord("survival times must be finite and nonnegative".into()));
    }
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        greenwood: Vec::new(),
    };
    let (mut s, mut gw) = (1.0, 0.0);
    let mut at_risk = times.len();
    let mut i = 0;
    while i < idx.len() {
        let t = times[idx[i]];
        let mut j = i;
        let mut d = 0;
        while j < idx.len() && times[idx[j]] == t {
            d += usize::from(is_event(idx[j]));
            j += 1;
        }
        if d > 0 {
            s *= (at_risk - d) as f64 / at_risk as f64;
            if d < at_risk {
                gw += d as f64 / (at_risk as f64 * (at_risk - d) as f64);
            }
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
            curve.greenwood.push(gw);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(curve)
}

/// Kaplan-Meier survival estimate. All-censored input gives the constant-one curve.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    check_lengths(times, events)?;
    product_limit(times, |i| events[i])
}

/// Censoring-survival estimate `G`: the product-limit estimate with the
/// event indicators reversed.
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    check_lengths(times, events)?;
    product_limit(times, |i| !events[i])
}

pub(crate) fn check_lengths(times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: events.len(),
        });
    }
    Ok(())
}
