use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::clip::clip_in_place;
use super::{log_binomial_expectation, PrivacyRegime, PrivacySpend};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::survival::{DiscretizedTarget, HazardModel};

pub const DEFAULT_BDP_ORDERS: [u32; 5] = [2, 4, 8, 16, 32];

/// Bayesian accountant settings. `delta_mu = beta + gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdpConfig {
    pub orders: Vec<u32>,
    pub beta: f64,
    pub gamma: f64,
    pub mc_samples: usize,
}

impl Default for BdpConfig {
    fn default() -> Self {
        Self {
            orders: DEFAULT_BDP_ORDERS.to_vec(),
            beta: 5e-6,
            gamma: 5e-6,
            mc_samples: 10,
        }
    }
}

impl BdpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() {
            return Err(Error::param("orders", "must not be empty"));
        }
        if self.orders.iter().any(|&l| l < 2) {
            return Err(Error::param("orders", "orders must be integers >= 2"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("beta", "must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", "must lie in (0, 1)"));
        }
        if self.beta + self.gamma >= 1.0 {
            return Err(Error::param("beta", "beta + gamma must be below 1"));
        }
        if self.mc_samples < 2 {
            return Err(Error::param("mc_samples", "need at least 2 samples"));
        }
        Ok(())
    }

    pub fn delta_mu(&self) -> f64 {
        self.beta + self.gamma
    }
}

/// Per-coordinate std of the noise added to a clipped batch mean.
pub fn noise_std(noise_multiplier: f64, clip_norm: f64, batch_size: usize) -> f64 {
    noise_multiplier * clip_norm / batch_size as f64
}

/// Left and right log-moments for one squared gradient deviation `delta`
/// under Gaussian noise of std `sigma`:
///
/// `log E_{Bin(l+1,q)} exp((K^2-K) delta / (2 sigma^2))` and
/// `log E_{Bin(l,q)} exp((K^2+K) delta / (2 sigma^2))`.
pub fn bdp_log_moments(delta: f64, lambda: u32, q: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::param("delta_sq", format!("sensitivity sample {delta} is not finite and nonnegative")));
    }
    if lambda < 1 {
        return Err(Error::param("lambda", "order must be positive"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("q", format!("sampling rate {q} outside [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "must be positive and finite"));
    }
    if delta == 0.0 {
        return Ok((0.0, 0.0));
    }
    let scale = delta / (2.0 * sigma * sigma);
    let left = log_binomial_expectation(lambda + 1, q, |k| (k * k - k) * scale);
    let right = log_binomial_expectation(lambda, q, |k| (k * k + k) * scale);
    Ok((left.max(0.0), right.max(0.0)))
}

/// Upper confidence bound, at level `1 - gamma`, on the per-step cost at
/// order `lambda` from Monte-Carlo sensitivity samples.
///
/// Works on `exp(c)`: `log(mean + t_{1-gamma, M-1} sd / sqrt(M))`. With fewer
/// than five samples the empirical maximum is used if larger.
pub fn bdp_step_cost(deltas: &[f64], lambda: u32, q: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput("sensitivity samples"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", "must lie in (0, 1)"));
    }
    let costs = deltas
        .iter()
        .map(|&d| bdp_log_moments(d, lambda, q, sigma).map(|(l, r)| l.max(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ucb_log_mean_exp(&costs, gamma))
}

fn ucb_log_mean_exp(costs: &[f64], gamma: f64) -> f64 {
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = costs.len();
    if m < 2 {
        return max;
    }
    // Scale by e^{-max} so the moments stay finite.
    let scaled: Vec<f64> = costs.iter().map(|c| (c - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / m as f64;
    let var = scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (m - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - gamma);
    let ucb = max + (mean + t * var.sqrt() / (m as f64).sqrt()).ln();
    if m < 5 {
        ucb.max(max)
    } else {
        ucb
    }
}

/// Squared deviations of the clipped batch mean when one batch element is
/// swapped for a record from `pool`.
///
/// The replaced index and the replacement are drawn uniformly from `rng`.
pub fn mc_sensitivity<R: Rng + ?Sized>(
    model: &HazardModel,
    batch: &[(&[f64], &DiscretizedTarget)],
    pool: &[(&[f64], &DiscretizedTarget)],
    mc_samples: usize,
    clip_norm: f64,
    rng: &mut R,
    exec: Execution,
) -> Result<Vec<f64>> {
    let clipped = exec.map(batch, |(x, t)| {
        model.sample_gradient(x, t).map(|mut g| {
            clip_in_place(&mut g.grad, clip_norm);
            g.grad
        })
    });
    let clipped = clipped.into_iter().collect::<Result<Vec<_>>>()?;
    mc_sensitivity_from_clipped(model, &clipped, pool, mc_samples, clip_norm, rng, exec)
}

/// As [`mc_sensitivity`], reusing already clipped per-sample gradients of the batch.
pub fn mc_sensitivity_from_clipped<R: Rng + ?Sized>(
    model: &HazardModel,
    clipped_batch: &[Vec<f64>],
    pool: &[(&[f64], &DiscretizedTarget)],
    mc_samples: usize,
    clip_norm: f64,
    rng: &mut R,
    exec: Execution,
) -> Result<Vec<f64>> {
    mc_sensitivity_excluding(model, clipped_batch, pool, &[], mc_samples, clip_norm, rng, exec)
}

/// As [`mc_sensitivity_from_clipped`], drawing replacements only from pool
/// entries whose `excluded` flag is unset. Falls back to the whole pool
/// when every entry is excluded.
#[allow(clippy::too_many_arguments)]
pub fn mc_sensitivity_excluding<R: Rng + ?Sized>(
    model: &HazardModel,
    clipped_batch: &[Vec<f64>],
    pool: &[(&[f64], &DiscretizedTarget)],
    excluded: &[bool],
    mc_samples: usize,
    clip_norm: f64,
    rng: &mut R,
    exec: Execution,
) -> Result<Vec<f64>> {
    if clipped_batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if pool.is_empty() {
        return Err(Error::EmptyInput("replacement pool"));
    }
    if !excluded.is_empty() && excluded.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            actual: excluded.len(),
        });
    }
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(Error::param("clip_norm", "must be positive"));
    }
    let is_excluded = |i: usize| excluded.get(i).copied().unwrap_or(false);
    let n_excluded = (0..pool.len()).filter(|&i| is_excluded(i)).count();
    let allowed: Option<Vec<usize>> = if n_excluded == pool.len() {
        None
    } else if 2 * n_excluded > pool.len() {
        Some((0..pool.len()).filter(|&i| !is_excluded(i)).collect())
    } else {
        None
    };
    let l = clipped_batch.len();
    let draws: Vec<(usize, usize)> = (0..mc_samples)
        .map(|_| {
            let r = rng.random_range(0..l);
            let p = match &allowed {
                Some(list) => list[rng.random_range(0..list.len())],
                None if n_excluded == pool.len() || n_excluded == 0 => rng.random_range(0..pool.len()),
                None => loop {
                    let p = rng.random_range(0..pool.len());
                    if !is_excluded(p) {
                        break p;
                    }
                },
            };
            (r, p)
        })
        .collect();
    let results = exec.map(&draws, |&(r, p)| -> Result<f64> {
        let (x, t) = pool[p];
        let mut g = model.sample_gradient(x, t)?.grad;
        clip_in_place(&mut g, clip_norm);
        let sq: f64 = clipped_batch[r].iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sq / (l * l) as f64)
    });
    results.into_iter().collect()
}

/// Cumulative per-order Bayesian privacy cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdpLedger {
    orders: Vec<u32>,
    costs: Vec<f64>,
    steps: u64,
}

impl Default for BdpLedger {
    fn default() -> Self {
        Self::new(DEFAULT_BDP_ORDERS.to_vec()).expect("default orders are valid")
    }
}

impl BdpLedger {
    pub fn new(orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::EmptyInput("BDP order grid"));
        }
        if orders.iter().any(|&l| l < 1) {
            return Err(Error::param("orders", "orders must be positive"));
        }
        let costs = vec![0.0; orders.len()];
        Ok(Self { orders, costs, steps: 0 })
    }

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

    /// Adds one step whose cost is estimated from `deltas`.
    pub fn accumulate(&mut self, deltas: &[f64], q: f64, sigma: f64, gamma: f64) -> Result<()> {
        let step = self
            .orders
            .iter()
            .map(|&l| bdp_step_cost(deltas, l, q, sigma, gamma))
            .collect::<Result<Vec<_>>>()?;
        self.add_step_costs(&step, 1)
    }

    /// Adds `n_steps` steps of the given per-order cost.
    pub fn add_step_costs(&mut self, step: &[f64], n_steps: u64) -> Result<()> {
        if step.len() != self.orders.len() {
            return Err(Error::DimensionMismatch {
                expected: self.orders.len(),
                actual: step.len(),
            });
        }
        if step.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Divergence("non-finite privacy cost".into()));
        }
        self.costs.iter_mut().zip(step).for_each(|(a, c)| *a += n_steps as f64 * c);
        self.steps += n_steps;
        Ok(())
    }

    pub fn merge(&mut self, other: &BdpLedger) -> Result<()> {
        if self.orders != other.orders {
            return Err(Error::param("orders", "ledgers use different order grids"));
        }
        self.costs.iter_mut().zip(&other.costs).for_each(|(a, b)| *a += b);
        self.steps += other.steps;
        Ok(())
    }

    pub fn finalize(&self, beta: f64, gamma: f64) -> Result<PrivacySpend> {
        bdp_finalize(self, beta, gamma)
    }
}

/// `epsilon_mu = min_lambda (C_tot(lambda) - ln beta) / lambda`, `delta_mu = beta + gamma`.
pub fn bdp_finalize(ledger: &BdpLedger, beta: f64, gamma: f64) -> Result<PrivacySpend> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param("beta", "must lie in (0, 1)"));
    }
    if !(gamma >= 0.0 && beta + gamma < 1.0) {
        return Err(Error::param("gamma", "beta + gamma must lie in (0, 1)"));
    }
    let log_beta = beta.ln();
    let (epsilon, order) = ledger
        .orders
        .iter()
        .zip(&ledger.costs)
        .map(|(&l, &c)| ((c - log_beta) / l as f64, l))
        .fold((f64::INFINITY, None), |best, (e, l)| if e < best.0 { (e, Some(l)) } else { best });
    if order.is_none() {
        return Err(Error::EmptyInput("BDP order grid"));
    }
    Ok(PrivacySpend {
        epsilon,
        delta: beta + gamma,
        regime: PrivacyRegime::Bayesian,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::rdp_step_cost;

    #[test]
    fn zero_sensitivity_costs_nothing() {
        for l in DEFAULT_BDP_ORDERS {
            assert_eq!(bdp_step_cost(&[0.0; 10], l, 0.3, 0.5, 1e-5).unwrap(), 0.0);
        }
    }

    #[test]
    fn order_one_three_term_sum() {
        let (q, d, s) = (0.2f64, 0.7f64, 0.9f64);
        let (left, _) = bdp_log_moments(d, 1, q, s).unwrap();
        let expect = (1.0 - q).powi(2) + 2.0 * q * (1.0 - q) + q * q * (d / (s * s)).exp();
        assert!((left - expect.ln()).abs() < 1e-14);
    }

    #[test]
    fn unit_sensitivity_left_moment_matches_classical() {
        for alpha in [3u32, 5, 17] {
            let (left, _) = bdp_log_moments(1.0, alpha - 1, 0.05, 1.3).unwrap();
            let rdp = rdp_step_cost(0.05, 1.3, alpha).unwrap() * (alpha - 1) as f64;
            assert!((left - rdp).abs() < 1e-12);
        }
    }

    #[test]
    fn decreasing_in_sigma_increasing_in_delta() {
        let deltas = [0.01, 0.02, 0.015, 0.03, 0.005, 0.02, 0.01, 0.012, 0.018, 0.025];
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let s = 0.5 + 0.25 * i as f64;
            let c = bdp_step_cost(&deltas, 8, 0.1, s, 1e-5).unwrap();
            assert!(c < prev);
            prev = c;
        }
        let mut prev = -1.0;
        for i in 1..=10 {
            let d = 0.01 * i as f64;
            let c = bdp_step_cost(&[d; 10], 8, 0.1, 1.0, 1e-5).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn constant_samples_bound_is_the_constant() {
        let c = bdp_step_cost(&[0.2; 7], 4, 0.1, 1.0, 1e-3).unwrap();
        let (l, r) = bdp_log_moments(0.2, 4, 0.1, 1.0).unwrap();
        assert!((c - l.max(r)).abs() < 1e-12);
    }

    #[test]
    fn ucb_never_below_sample_mean() {
        let costs = [0.1, 0.5, 0.2, 0.9, 0.3, 0.05];
        let ucb = ucb_log_mean_exp(&costs, 0.05);
        let lme = (costs.iter().map(|c: &f64| c.exp()).sum::<f64>() / 6.0).ln();
        assert!(ucb > lme);
        let small = ucb_log_mean_exp(&[0.1, 0.9], 0.5);
        assert!(small >= 0.9);
    }

    #[test]
    fn zero_ledger_finalize() {
        let spend = BdpLedger::default().finalize(1e-5, 1e-6).unwrap();
        assert!((spend.epsilon - 1e5f64.ln() / 32.0).abs() < 1e-12);
        assert!((spend.epsilon - 0.3598).abs() < 1e-4);
        assert_eq!(spend.order, Some(32));
        assert!((spend.delta - 1.1e-5).abs() < 1e-18);
    }

    #[test]
    fn linear_costs_finalize() {
        let orders: Vec<u32> = (2..=32).collect();
        let costs: Vec<f64> = orders.iter().map(|&l| l as f64).collect();
        let ledger = BdpLedger::from_costs(orders, costs, 1).unwrap();
        let spend = bdp_finalize(&ledger, 1e-5, 1e-5).unwrap();
        assert!((spend.epsilon - (1.0 + 1e5f64.ln() / 32.0)).abs() < 1e-12);
        assert_eq!(spend.order, Some(32));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(bdp_step_cost(&[f64::NAN], 2, 0.1, 1.0, 0.1).is_err());
        assert!(bdp_step_cost(&[-1.0], 2, 0.1, 1.0, 0.1).is_err());
    }
}
