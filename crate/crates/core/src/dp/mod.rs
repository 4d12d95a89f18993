//! Gradient sanitization and privacy accounting.
//!
//! Two accountants are provided. [`RdpLedger`] composes the Rényi cost of the
//! subsampled Gaussian mechanism at integer orders and converts it to
//! `(epsilon, delta)`. [`BdpLedger`] accumulates Monte-Carlo estimated,
//! data-dependent privacy costs and converts them with the Bayesian tail
//! bound `(C_tot(lambda) - ln beta) / lambda`, `delta = beta + gamma`.

mod bdp;
mod clip;
mod rdp;

use serde::{Deserialize, Serialize};

pub use bdp::{
    bdp_finalize, bdp_log_moments, bdp_step_cost, mc_sensitivity, mc_sensitivity_excluding, mc_sensitivity_from_clipped,
    noise_std, BdpConfig,
    BdpLedger, DEFAULT_BDP_ORDERS,
};
pub use clip::{add_noise, clip_gradient, clip_in_place, l2_norm, sanitize_batch};
pub use rdp::{
    calibrate_sigma, epsilon_for, gaussian_rdp_leading_term, rdp_step_cost, rdp_to_dp, DpConfig, RdpLedger,
    DEFAULT_RDP_ORDERS, SIGMA_BRACKET,
};

/// Which privacy mechanism protects a training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyRegime {
    #[default]
    None,
    Classical,
    Bayesian,
}

impl PrivacyRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyRegime::None => "none",
            PrivacyRegime::Classical => "classical",
            PrivacyRegime::Bayesian => "bayesian",
        }
    }
}

impl std::fmt::Display for PrivacyRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PrivacyRegime {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "none" => Ok(PrivacyRegime::None),
            "classical" => Ok(PrivacyRegime::Classical),
            "bayesian" => Ok(PrivacyRegime::Bayesian),
            other => Err(crate::Error::Config(format!("unknown privacy regime `{other}`"))),
        }
    }
}

/// A reported `(epsilon, delta)` guarantee and the order that achieved it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpend {
    pub epsilon: f64,
    pub delta: f64,
    pub regime: PrivacyRegime,
    pub order: Option<u32>,
}

impl PrivacySpend {
    pub fn zero(regime: PrivacyRegime) -> Self {
        Self {
            epsilon: 0.0,
            delta: 0.0,
            regime,
            order: None,
        }
    }
}

/// `log(sum exp(terms))`, stable for large or `-inf` terms.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln C(n, k)` summed directly; orders here stay small.
pub(crate) fn ln_binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// `log E_{K ~ Bin(n, q)}[exp(f(K))]` by exact finite summation.
pub(crate) fn log_binomial_expectation(n: u32, q: f64, f: impl Fn(f64) -> f64) -> f64 {
    if q == 0.0 {
        return f(0.0);
    }
    if q == 1.0 {
        return f(n as f64);
    }
    let (lq, lp) = (q.ln(), (-q).ln_1p());
    let terms: Vec<f64> = (0..=n)
        .map(|k| ln_binomial(n, k) + k as f64 * lq + (n - k) as f64 * lp + f(k as f64))
        .collect();
    log_sum_exp(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_coefficients() {
        assert!((ln_binomial(5, 2) - 10f64.ln()).abs() < 1e-14);
        assert_eq!(ln_binomial(7, 0), 0.0);
        assert!((ln_binomial(64, 32) - 1.832_624_140_942_590_5e18f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn binomial_expectation_of_one_is_zero() {
        for q in [0.0, 0.01, 0.5, 1.0] {
            assert!(log_binomial_expectation(10, q, |_| 0.0).abs() < 1e-14);
        }
    }

    #[test]
    fn regime_parse() {
        assert_eq!("bayesian".parse::<PrivacyRegime>().unwrap(), PrivacyRegime::Bayesian);
        assert!("laplace".parse::<PrivacyRegime>().is_err());
    }
}
