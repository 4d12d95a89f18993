use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered interval boundaries `0 = tau_0 < tau_1 < ... < tau_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    boundaries: Vec<f64>,
}

impl TimeGrid {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidGrid("need at least one interval".into()));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::InvalidGrid("first boundary must be 0".into()));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidGrid("boundaries must be finite".into()));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("boundaries must be strictly increasing".into()));
        }
        Ok(Self { boundaries })
    }

    /// Equal-width monthly grid covering `months` intervals.
    pub fn monthly(months: usize) -> Result<Self> {
        Self::new((0..=months).map(|m| m as f64).collect())
    }

    /// Number of intervals `T`.
    pub fn intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Right end `tau_T` of the observation window.
    pub fn horizon(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    /// Right endpoints `tau_1..tau_T`.
    pub fn right_endpoints(&self) -> &[f64] {
        &self.boundaries[1..]
    }

    /// Zero-based index `j` with `tau_j <= t < tau_{j+1}`, or `None` when
    /// `t` lies at or beyond `tau_T`.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t >= self.horizon() {
            return None;
        }
        // number of right endpoints <= t
        Some(self.boundaries[1..].partition_point(|&b| b <= t))
    }

    /// Midpoint of zero-based interval `l`.
    pub fn midpoint(&self, l: usize) -> f64 {
        0.5 * (self.boundaries[l] + self.boundaries[l + 1])
    }

    /// Number of right endpoints `tau_l` (l >= 1) not exceeding `t`; indexes
    /// the right-continuous step survival function.
    pub fn steps_at(&self, t: f64) -> usize {
        self.boundaries[1..].partition_point(|&b| b <= t)
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.boundaries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![1.0, 2.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 2.0, 2.0]).is_err());
        assert!(TimeGrid::monthly(0).is_err());
    }

    #[test]
    fn interval_lookup() {
        let g = TimeGrid::monthly(4).unwrap();
        assert_eq!(g.intervals(), 4);
        assert_eq!(g.interval_of(0.0), Some(0));
        assert_eq!(g.interval_of(1.5), Some(1));
        assert_eq!(g.interval_of(1.0), Some(1));
        assert_eq!(g.interval_of(3.999), Some(3));
        assert_eq!(g.interval_of(4.0), None);
        assert_eq!(g.steps_at(0.5), 0);
        assert_eq!(g.steps_at(2.0), 2);
        assert_eq!(g.steps_at(100.0), 4);
    }
}
