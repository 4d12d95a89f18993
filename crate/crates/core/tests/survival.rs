mod common;

use common::{numeric_gradient, random_examples, random_model, random_record, rel_err};
use fedsurv_core::rng::stream;
use fedsurv_core::survival::{
    discretize, nll_loss, per_sample_gradients, survival_curve, Activation, HazardModel, SurvivalRecord, TimeGrid,
};
use fedsurv_core::Execution;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn gradients_match_finite_differences() {
    let mut rng = stream(&[11]);
    for case in 0..20u64 {
        let d = rng.random_range(1..=5);
        let t = rng.random_range(1..=4);
        let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=4)).collect();
        let act = [Activation::Tanh, Activation::Selu][case as usize % 2];
        let model = random_model(case, d, &hidden, t, act);
        let grid = TimeGrid::monthly(t).unwrap();
        for ex in random_examples(case, 3, d, &grid) {
            let g = model.sample_gradient(&ex.record.x, &ex.target).unwrap().grad;
            let num = numeric_gradient(&model, &ex.record.x, &ex.target, 1e-6);
            assert!(rel_err(&g, &num) < 1e-5, "case {case}: {}", rel_err(&g, &num));
        }
    }
}

#[test]
fn batch_gradient_is_the_sum_of_sample_gradients() {
    let grid = TimeGrid::monthly(3).unwrap();
    let model = random_model(5, 4, &[5], 3, Activation::Selu);
    let exs = random_examples(5, 17, 4, &grid);
    let batch: Vec<_> = exs.iter().map(|e| (e.record.x.as_slice(), &e.target)).collect();
    let seq = per_sample_gradients(&model, &batch, Execution::Sequential).unwrap();
    let par = per_sample_gradients(&model, &batch, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    let total: f64 = seq.iter().map(|g| g.loss).sum();
    // Finite difference of the summed loss along a random direction.
    let mut rng = stream(&[6]);
    let dir: Vec<f64> = (0..model.num_params()).map(|_| rng.random::<f64>() - 0.5).collect();
    let shifted = |s: f64| {
        let mut m = model.clone();
        m.params_mut().iter_mut().zip(&dir).for_each(|(p, d)| *p += s * d);
        exs.iter().map(|e| m.sample_gradient(&e.record.x, &e.target).unwrap().loss).sum::<f64>()
    };
    let analytic: f64 = (0..model.num_params())
        .map(|i| dir[i] * seq.iter().map(|g| g.grad[i]).sum::<f64>())
        .sum();
    let numeric = (shifted(1e-6) - shifted(-1e-6)) / 2e-6;
    assert!((analytic - numeric).abs() / analytic.abs().max(1e-8) < 1e-6);
    assert!((total - shifted(0.0)).abs() < 1e-12);
}

/// Product-form likelihood read straight off the record: an event in
/// interval `j` contributes `h_j prod_{l<j} (1 - h_l)`; a censored record
/// contributes `prod (1 - h_l)` over intervals whose midpoint it reached.
fn product_likelihood(h: &[f64], rec: &SurvivalRecord, grid: &TimeGrid) -> f64 {
    let b = grid.boundaries();
    let horizon = grid.horizon();
    if rec.event && rec.t <= horizon {
        let j = (0..h.len()).find(|&l| rec.t < b[l + 1]).unwrap_or(h.len() - 1);
        h[j] * h[..j].iter().map(|v| 1.0 - v).product::<f64>()
    } else {
        let t = rec.t.min(horizon);
        (0..h.len())
            .filter(|&l| t >= 0.5 * (b[l] + b[l + 1]))
            .map(|l| 1.0 - h[l])
            .product()
    }
}

#[test]
fn loss_equals_negative_log_product_likelihood() {
    let mut rng = stream(&[21]);
    for case in 0..100u64 {
        let t = rng.random_range(1..=6);
        let grid = TimeGrid::monthly(t).unwrap();
        let h: Vec<f64> = (0..t).map(|_| 0.02 + 0.9 * rng.random::<f64>()).collect();
        let rec = random_record(&mut rng, 1, grid.horizon());
        let target = discretize(&rec, &grid).unwrap();
        let loss = nll_loss(&fedsurv_core::survival::HazardPrediction { hazards: h.clone() }, &target).unwrap();
        let oracle = -product_likelihood(&h, &rec, &grid).ln();
        assert!((loss - oracle).abs() < 1e-10, "case {case}: {loss} vs {oracle}");
    }
}

#[test]
fn zero_model_predicts_one_half() {
    let m = HazardModel::zeros(vec![2, 3, 4], Activation::Selu).unwrap();
    let p = m.forward(&[0.3, -1.0]).unwrap();
    assert_eq!(p.hazards, vec![0.5; 4]);
    assert_eq!(p.survival_curve(), vec![0.5, 0.25, 0.125, 0.0625]);
}

proptest! {
    #[test]
    fn survival_curves_are_nonincreasing(h in prop::collection::vec(0.0f64..=1.0, 1..12)) {
        let s = survival_curve(&h);
        let mut prev = 1.0;
        for v in s {
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn targets_are_well_formed(t in 0.0f64..20.0, event: bool, months in 1usize..15) {
        let grid = TimeGrid::monthly(months).unwrap();
        let target = discretize(&SurvivalRecord::new(vec![0.0], t, event).unwrap(), &grid).unwrap();
        prop_assert!(target.is_well_formed());
        prop_assert_eq!(target.fail.iter().any(|f| *f), event && t <= grid.horizon());
    }

    #[test]
    fn hazards_lie_in_unit_interval(seed in 0u64..1000, x in prop::collection::vec(-50.0f64..50.0, 3)) {
        let m = random_model(seed, 3, &[4], 5, Activation::Selu);
        for h in m.forward(&x).unwrap().hazards {
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
