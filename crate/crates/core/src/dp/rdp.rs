use serde::{Deserialize, Serialize};

use super::{log_binomial_expectation, PrivacyRegime, PrivacySpend};
use crate::error::{Error, Result};

/// Integer orders 2..=64.
pub const DEFAULT_RDP_ORDERS: [u32; 63] = {
    let mut out = [0u32; 63];
    let mut i = 0;
    while i < 63 {
        out[i] = i as u32 + 2;
        i += 1;
    }
    out
};

/// Search bracket for [`calibrate_sigma`].
pub const SIGMA_BRACKET: (f64, f64) = (0.3, 100.0);

/// Clipping and noise settings for DP-SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub delta: f64,
    pub target_epsilons: Vec<f64>,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            clip_norm: 1.0,
            noise_multiplier: 1.0,
            delta: 1e-5,
            target_epsilons: vec![0.5, 1.0, 2.0, 10.0],
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::param("clip_norm", "must be positive and finite"));
        }
        if !(self.noise_multiplier > 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::param("noise_multiplier", "must be positive and finite"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        if self.target_epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::param("target_epsilons", "must be positive and finite"));
        }
        Ok(())
    }
}

fn check_step(q: f64, sigma: f64, alpha: u32) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("q", format!("sampling rate {q} outside [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "must be positive and finite"));
    }
    if alpha < 2 {
        return Err(Error::param("alpha", "orders must be at least 2"));
    }
    Ok(())
}

/// Per-step RDP of the Poisson-subsampled Gaussian mechanism at integer
/// order `alpha`, sensitivity one and noise multiplier `sigma`:
///
/// `log sum_k C(a,k) (1-q)^(a-k) q^k exp((k^2-k)/(2 sigma^2)) / (a-1)`.
pub fn rdp_step_cost(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    check_step(q, sigma, alpha)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(alpha as f64 / (2.0 * sigma * sigma));
    }
    let s2 = sigma * sigma;
    let log_a = log_binomial_expectation(alpha, q, |k| (k * k - k) / (2.0 * s2));
    Ok((log_a / (alpha as f64 - 1.0)).max(0.0))
}

/// Small-`q` leading term `alpha q^2 (e^(1/sigma^2) - 1) / 2` of
/// [`rdp_step_cost`]. For large `sigma` it approaches `alpha q^2 / (2 sigma^2)`.
pub fn gaussian_rdp_leading_term(q: f64, sigma: f64, alpha: u32) -> f64 {
    alpha as f64 * q * q * (1.0 / (sigma * sigma)).exp_m1() / 2.0
}

/// Cumulative per-order RDP costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpLedger {
    orders: Vec<u32>,
    costs: Vec<f64>,
    steps: u64,
}

impl Default for RdpLedger {
    fn default() -> Self {
        Self::new(DEFAULT_RDP_ORDERS.to_vec()).expect("default orders are valid")
    }
}

impl RdpLedger {
    pub fn new(orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::EmptyInput("RDP order grid"));
        }
        if orders.iter().any(|&a| a < 2) {
            return Err(Error::param("orders", "orders must be at least 2"));
        }
        let costs = vec![0.0; orders.len()];
        Ok(Self { orders, costs, steps: 0 })
    }

    /// Ledger with explicit costs; used for conversions of external tallies.
    pub fn from_costs(orders: Vec<u32>, costs: Vec<f64>, steps: u64) -> Result<Self> {
        let mut ledger = Self::new(orders)?;
        if costs.len() != ledger.orders.len() {
            return Err(Error::DimensionMismatch {
                expected: ledger.orders.len(),
                actual: costs.len(),
            });
        }
        if costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::param("costs", "must be nonnegative"));
        }
        ledger.costs = costs;
        ledger.steps = steps;
        Ok(ledger)
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Adds `n_steps` identical steps at rate `q` and multiplier `sigma`.
    pub fn compose(&mut self, q: f64, sigma: f64, n_steps: u64) -> Result<()> {
        for (cost, &alpha) in self.costs.iter_mut().zip(&self.orders) {
            *cost += n_steps as f64 * rdp_step_cost(q, sigma, alpha)?;
        }
        self.steps += n_steps;
        Ok(())
    }

    /// Adds another ledger's costs over the same order grid.
    pub fn merge(&mut self, other: &RdpLedger) -> Result<()> {
        if self.orders != other.orders {
            return Err(Error::param("orders", "ledgers use different order grids"));
        }
        self.costs.iter_mut().zip(&other.costs).for_each(|(a, b)| *a += b);
        self.steps += other.steps;
        Ok(())
    }

    pub fn to_dp(&self, delta: f64) -> Result<PrivacySpend> {
        rdp_to_dp(self, delta)
    }
}

/// `epsilon = min_alpha [eps_alpha + ln(1/delta)/(alpha-1)]`.
pub fn rdp_to_dp(ledger: &RdpLedger, delta: f64) -> Result<PrivacySpend> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", "must lie in (0, 1)"));
    }
    let log_inv = -delta.ln();
    let (epsilon, order) = ledger
        .orders
        .iter()
        .zip(&ledger.costs)
        .map(|(&a, &c)| (c + log_inv / (a as f64 - 1.0), a))
        .fold((f64::INFINITY, None), |best, (e, a)| if e < best.0 { (e, Some(a)) } else { best });
    if order.is_none() {
        return Err(Error::EmptyInput("RDP order grid"));
    }
    Ok(PrivacySpend {
        epsilon,
        delta,
        regime: PrivacyRegime::Classical,
        order,
    })
}

/// Classical epsilon after `steps` steps at `(q, sigma)` on `orders`.
pub fn epsilon_for(q: f64, sigma: f64, steps: u64, delta: f64, orders: &[u32]) -> Result<PrivacySpend> {
    let mut ledger = RdpLedger::new(orders.to_vec())?;
    ledger.compose(q, sigma, steps)?;
    rdp_to_dp(&ledger, delta)
}

/// Smallest-noise `sigma` in [`SIGMA_BRACKET`] whose epsilon lands in
/// `[0.99 target, target]` after `total_steps` steps.
///
/// Returns the bracket minimum when even that already meets the target.
pub fn calibrate_sigma(target: f64, delta: f64, q: f64, total_steps: u64, orders: &[u32]) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::param("target_epsilon", "must be positive and finite"));
    }
    let eps = |s: f64| epsilon_for(q, s, total_steps, delta, orders).map(|p| p.epsilon);
    let (mut lo, mut hi) = SIGMA_BRACKET;
    if eps(lo)? <= target {
        return Ok(lo);
    }
    if eps(hi)? > target {
        return Err(Error::Calibration(format!(
            "target epsilon {target} unreachable with sigma <= {hi} (q = {q}, steps = {total_steps}, delta = {delta})"
        )));
    }
    // eps(lo) > target >= eps(hi); keep hi feasible.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = eps(mid)?;
        if e > target {
            lo = mid;
        } else {
            hi = mid;
            if e >= 0.99 * target {
                return Ok(mid);
            }
        }
    }
    Ok(hi)
}
