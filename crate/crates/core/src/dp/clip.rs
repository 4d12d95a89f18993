use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales `g` by `1 / max(1, ||g|| / c)` in place.
pub fn clip_in_place(g: &mut [f64], c: f64) {
    let norm = l2_norm(g);
    let scale = (norm / c).max(1.0);
    if scale > 1.0 {
        g.iter_mut().for_each(|v| *v /= scale);
    }
}

/// Returns `g / max(1, ||g||_2 / c)`.
pub fn clip_gradient(g: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("clip_norm", "must be positive"));
    }
    let mut out = g.to_vec();
    clip_in_place(&mut out, c);
    Ok(out)
}

/// Clipped mean of the per-sample gradients plus `N(0, (sigma c / L)^2)`
/// noise per coordinate, `L` being the batch size.
///
/// `sigma = 0` disables the noise.
pub fn sanitize_batch<R: Rng + ?Sized>(per_sample: &[Vec<f64>], c: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let first = per_sample.first().ok_or(Error::EmptyInput("per-sample gradients"))?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("clip_norm", "must be positive"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("noise_multiplier", "must be nonnegative"));
    }
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for g in per_sample {
        if g.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: g.len(),
            });
        }
        scratch.copy_from_slice(g);
        clip_in_place(&mut scratch, c);
        sum.iter_mut().zip(&scratch).for_each(|(s, v)| *s += v);
    }
    let l = per_sample.len() as f64;
    sum.iter_mut().for_each(|s| *s /= l);
    add_noise(&mut sum, sigma * c / l, rng);
    Ok(sum)
}

/// Adds i.i.d. `N(0, std^2)` noise to every coordinate; `std = 0` is a no-op.
pub fn add_noise<R: Rng + ?Sized>(g: &mut [f64], std: f64, rng: &mut R) {
    if std > 0.0 {
        let normal = Normal::new(0.0, std).expect("finite positive std");
        g.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn below_threshold_unchanged() {
        let g = [0.3, 0.4];
        assert_eq!(clip_gradient(&g, 1.0).unwrap(), g.to_vec());
    }

    #[test]
    fn norm_five_to_unit() {
        let c = clip_gradient(&[3.0, 4.0], 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn bad_clip_norm() {
        assert!(clip_gradient(&[1.0], 0.0).is_err());
    }

    #[test]
    fn noiseless_mean() {
        let grads = vec![vec![3.0, 4.0], vec![0.1, 0.2]];
        let mut rng = stream(&[1]);
        let out = sanitize_batch(&grads, 1.0, 0.0, &mut rng).unwrap();
        assert!((out[0] - (0.6 + 0.1) / 2.0).abs() < 1e-15);
        assert!((out[1] - (0.8 + 0.2) / 2.0).abs() < 1e-15);

        let same = vec![vec![0.2, -0.1]; 5];
        let out = sanitize_batch(&same, 1.0, 0.0, &mut rng).unwrap();
        for (a, b) in out.iter().zip(&same[0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let grads = vec![vec![0.5, -2.0, 1.0]; 4];
        let a = sanitize_batch(&grads, 1.0, 1.0, &mut stream(&[9])).unwrap();
        let b = sanitize_batch(&grads, 1.0, 1.0, &mut stream(&[9])).unwrap();
        assert_eq!(a, b);
        let c = sanitize_batch(&grads, 1.0, 1.0, &mut stream(&[10])).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_scale_is_sigma_c_over_l() {
        let l = 8;
        let grads = vec![vec![0.0; 20_000]; l];
        let out = sanitize_batch(&grads, 2.0, 1.5, &mut stream(&[4])).unwrap();
        let var = out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64;
        let expected = (1.5 * 2.0 / l as f64).powi(2);
        assert!((var / expected - 1.0).abs() < 0.05, "var {var} expected {expected}");
    }
}
