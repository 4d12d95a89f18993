//! Discrete-time survival representation and the hazard network.

mod grid;
mod loss;
mod model;
mod optim;
mod target;

pub use grid::TimeGrid;
pub use loss::{logit_gradient, nll_loss, HAZARD_CLAMP};
pub(crate) use model::sigmoid;
pub use model::{per_sample_gradients, Activation, HazardModel, HazardPrediction, SampleGradient};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, Optimizer, OptimizerConfig, OptimizerKind};
pub use target::{discretize, Example, DiscretizedTarget, SurvivalRecord};

/// Survival curve `S_l = prod_{j<=l} (1 - h_j)` for `l = 1..T`.
pub fn survival_curve(hazards: &[f64]) -> Vec<f64> {
    let mut s = 1.0;
    hazards
        .iter()
        .map(|h| {
            s *= 1.0 - h;
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_curve_examples() {
        assert_eq!(survival_curve(&[0.5, 0.5]), vec![0.5, 0.25]);
        assert_eq!(survival_curve(&[0.0; 4]), vec![1.0; 4]);
    }

    #[test]
    fn survival_curve_matches_direct_product() {
        let h = [0.1, 0.35, 0.02, 0.7, 0.5];
        let s = survival_curve(&h);
        for l in 0..h.len() {
            let direct: f64 = h[..=l].iter().map(|x| 1.0 - x).product();
            assert!((s[l] - direct).abs() < 1e-15);
        }
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }
}
