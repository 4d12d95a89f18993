use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dp::{
    bdp_finalize, bdp_step_cost, calibrate_sigma, epsilon_for, BdpLedger, DEFAULT_BDP_ORDERS, DEFAULT_RDP_ORDERS,
};
use crate::error::{Error, Result};

/// Inputs of the budget calculator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountantConfig {
    pub sigmas: Vec<f64>,
    pub q: f64,
    pub steps: u64,
    pub delta: f64,
    pub orders: Vec<u32>,
    pub target_epsilons: Vec<f64>,
    /// Squared sensitivity samples `||g - g'||^2 / C^2`, each in `[0, 4]`.
    /// Bayesian rows are emitted only when nonempty.
    pub sensitivity_profile: Vec<f64>,
    pub bdp_orders: Vec<u32>,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for AccountantConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![1.0],
            q: 0.01,
            steps: 1000,
            delta: 1e-5,
            orders: DEFAULT_RDP_ORDERS.to_vec(),
            target_epsilons: vec![0.5, 1.0, 2.0, 10.0],
            sensitivity_profile: Vec::new(),
            bdp_orders: DEFAULT_BDP_ORDERS.to_vec(),
            beta: 5e-6,
            gamma: 5e-6,
        }
    }
}

impl AccountantConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::param("sigmas", "must be positive"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::param("q", "must lie in (0, 1]"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        if self.orders.is_empty() || self.orders.iter().any(|&a| a < 2) {
            return Err(Error::param("orders", "need orders >= 2"));
        }
        if self.target_epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::param("target_epsilons", "must be positive"));
        }
        if self.sensitivity_profile.iter().any(|d| !(0.0..=4.0).contains(d)) {
            return Err(Error::param("sensitivity_profile", "values must lie in [0, 4]"));
        }
        if !self.sensitivity_profile.is_empty() {
            if self.bdp_orders.is_empty() || self.bdp_orders.iter().any(|&l| l < 2) {
                return Err(Error::param("bdp_orders", "need orders >= 2"));
            }
            if !(self.beta > 0.0 && self.gamma > 0.0 && self.beta + self.gamma < 1.0) {
                return Err(Error::param("beta", "beta, gamma positive with beta + gamma < 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    /// `classical`, `bayesian` or `calibration`.
    pub kind: String,
    pub sigma: f64,
    pub q: f64,
    pub steps: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub order: Option<u32>,
    pub target_epsilon: Option<f64>,
}

/// Bayesian ledger after `steps` identical steps with the given profile.
/// Profile values are relative to `C^2`, so the noise std is `sigma` in the same units.
pub fn profile_ledger(cfg: &AccountantConfig, sigma: f64) -> Result<BdpLedger> {
    let mut ledger = BdpLedger::new(cfg.bdp_orders.clone())?;
    let step = cfg
        .bdp_orders
        .iter()
        .map(|&l| bdp_step_cost(&cfg.sensitivity_profile, l, cfg.q, sigma, cfg.gamma))
        .collect::<Result<Vec<_>>>()?;
    ledger.add_step_costs(&step, cfg.steps)?;
    Ok(ledger)
}

pub fn budget_table(cfg: &AccountantConfig) -> Result<Vec<BudgetRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &sigma in &cfg.sigmas {
        let spend = epsilon_for(cfg.q, sigma, cfg.steps, cfg.delta, &cfg.orders)?;
        rows.push(BudgetRow {
            kind: "classical".into(),
            sigma,
            q: cfg.q,
            steps: cfg.steps,
            delta: cfg.delta,
            epsilon: spend.epsilon,
            order: spend.order,
            target_epsilon: None,
        });
        if !cfg.sensitivity_profile.is_empty() {
            let spend = bdp_finalize(&profile_ledger(cfg, sigma)?, cfg.beta, cfg.gamma)?;
            rows.push(BudgetRow {
                kind: "bayesian".into(),
                sigma,
                q: cfg.q,
                steps: cfg.steps,
                delta: spend.delta,
                epsilon: spend.epsilon,
                order: spend.order,
                target_epsilon: None,
            });
        }
    }
    for &target in &cfg.target_epsilons {
        let sigma = calibrate_sigma(target, cfg.delta, cfg.q, cfg.steps, &cfg.orders)?;
        let spend = epsilon_for(cfg.q, sigma, cfg.steps, cfg.delta, &cfg.orders)?;
        rows.push(BudgetRow {
            kind: "calibration".into(),
            sigma,
            q: cfg.q,
            steps: cfg.steps,
            delta: cfg.delta,
            epsilon: spend.epsilon,
            order: spend.order,
            target_epsilon: Some(target),
        });
    }
    Ok(rows)
}

pub fn write_budget_csv<W: Write>(rows: &[BudgetRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("budget table", e))
}
