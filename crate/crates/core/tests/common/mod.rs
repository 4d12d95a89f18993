#![allow(dead_code)]

use fedsurv_core::rng::stream;
use fedsurv_core::survival::{Activation, DiscretizedTarget, Example, HazardModel, SurvivalRecord, TimeGrid};
use rand::Rng;

/// Random model with `d` inputs, `t` outputs and small random hidden layers.
pub fn random_model(seed: u64, d: usize, hidden: &[usize], t: usize, act: Activation) -> HazardModel {
    let mut dims = vec![d];
    dims.extend(hidden);
    dims.push(t);
    let mut rng = stream(&[seed, 900]);
    let mut m = HazardModel::new(dims, act, &mut rng).unwrap();
    for p in m.params_mut() {
        *p += 0.1 * (rng.random::<f64>() - 0.5);
    }
    m
}

pub fn random_record<R: Rng>(rng: &mut R, d: usize, horizon: f64) -> SurvivalRecord {
    let x = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let t = rng.random::<f64>() * horizon * 1.2;
    SurvivalRecord::new(x, t, rng.random::<bool>()).unwrap()
}

pub fn random_examples(seed: u64, n: usize, d: usize, grid: &TimeGrid) -> Vec<Example> {
    let mut rng = stream(&[seed, 901]);
    (0..n)
        .map(|_| Example::new(random_record(&mut rng, d, grid.horizon()), grid).unwrap())
        .collect()
}

/// Central finite-difference gradient of the single-record loss.
pub fn numeric_gradient(model: &HazardModel, x: &[f64], target: &DiscretizedTarget, h: f64) -> Vec<f64> {
    let loss = |m: &HazardModel| m.sample_gradient(x, target).unwrap().loss;
    (0..model.num_params())
        .map(|i| {
            let mut up = model.clone();
            up.params_mut()[i] += h;
            let mut down = model.clone();
            down.params_mut()[i] -= h;
            (loss(&up) - loss(&down)) / (2.0 * h)
        })
        .collect()
}

fn ln_choose(n: u32, k: u32) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Integer-order RDP of one subsampled Gaussian step, evaluated term by term.
pub fn rdp_oracle(q: f64, sigma: f64, alpha: u32) -> f64 {
    let terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            let kf = k as f64;
            ln_choose(alpha, k) + kf * q.ln() + (alpha - k) as f64 * (1.0 - q).ln() + (kf * kf - kf) / (2.0 * sigma * sigma)
        })
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()) / (alpha as f64 - 1.0)
}

/// Composed epsilon by grid search over orders 2..=64.
pub fn epsilon_oracle(q: f64, sigma: f64, steps: u64, delta: f64) -> f64 {
    (2..=64u32)
        .map(|a| steps as f64 * rdp_oracle(q, sigma, a) + (1.0 / delta).ln() / (a as f64 - 1.0))
        .fold(f64::INFINITY, f64::min)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}
