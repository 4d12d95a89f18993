use serde::{Deserialize, Serialize};

use super::model::HazardModel;
use crate::error::{Error, Result};

fn check_gradient(model: &HazardModel, gradient: &[f64]) -> Result<()> {
    if gradient.len() != model.num_params() {
        return Err(Error::DimensionMismatch {
            expected: model.num_params(),
            actual: gradient.len(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    Ok(())
}

/// `theta <- theta - lr * g`.
pub fn sgd_step(model: &mut HazardModel, gradient: &[f64], learning_rate: f64) -> Result<()> {
    check_gradient(model, gradient)?;
    for (p, g) in model.params_mut().iter_mut().zip(gradient) {
        *p -= learning_rate * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut HazardModel, gradient: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    check_gradient(model, gradient)?;
    if state.m.len() != gradient.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            actual: gradient.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in model
        .params_mut()
        .iter_mut()
        .zip(gradient)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning_rate", "must be a nonnegative number"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("beta", "Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Optimizer owned by a single local training run.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam { cfg: AdamConfig, state: AdamState },
}

impl Optimizer {
    pub fn new(cfg: &OptimizerConfig, num_params: usize) -> Self {
        match cfg.kind {
            OptimizerKind::Sgd => Optimizer::Sgd {
                learning_rate: cfg.learning_rate,
            },
            OptimizerKind::Adam => Optimizer::Adam {
                cfg: AdamConfig {
                    learning_rate: cfg.learning_rate,
                    beta1: cfg.beta1,
                    beta2: cfg.beta2,
                    eps: cfg.eps,
                },
                state: AdamState::new(num_params),
            },
        }
    }

    pub fn step(&mut self, model: &mut HazardModel, gradient: &[f64]) -> Result<()> {
        match self {
            Optimizer::Sgd { learning_rate } => sgd_step(model, gradient, *learning_rate),
            Optimizer::Adam { cfg, state } => adam_step(model, gradient, state, cfg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::Activation;

    fn scalar_model(p: f64) -> HazardModel {
        // one weight, one bias
        HazardModel::from_params(vec![1, 1], Activation::Selu, vec![p, 0.0]).unwrap()
    }

    #[test]
    fn sgd_zero_gradient_and_zero_rate() {
        let mut m = scalar_model(0.7);
        sgd_step(&mut m, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(m.params(), &[0.7, 0.0]);
        sgd_step(&mut m, &[3.0, -2.0], 0.0).unwrap();
        assert_eq!(m.params(), &[0.7, 0.0]);
        sgd_step(&mut m, &[1.0, -2.0], 0.5).unwrap();
        assert_eq!(m.params(), &[0.7 - 0.5, 1.0]);
    }

    #[test]
    fn adam_first_step_by_hand() {
        // m1 = 0.1 g, v1 = 0.001 g^2; m_hat = g, v_hat = g^2
        // update = lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        let mut m = scalar_model(0.5);
        let mut st = AdamState::new(2);
        let g = 0.2;
        adam_step(&mut m, &[g, 0.0], &mut st, &cfg).unwrap();
        let expected = 0.5 - 1e-3 * g / (g + 1e-8);
        assert!((m.params()[0] - expected).abs() < 1e-15);
        assert_eq!(m.params()[1], 0.0);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut m = scalar_model(0.5);
        assert!(matches!(sgd_step(&mut m, &[f64::NAN, 0.0], 0.1), Err(Error::Divergence(_))));
        let mut st = AdamState::new(2);
        let r = adam_step(&mut m, &[f64::INFINITY, 0.0], &mut st, &AdamConfig::default());
        assert!(matches!(r, Err(Error::Divergence(_))));
    }
}
