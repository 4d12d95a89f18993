use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{logit_gradient, nll_unchecked};
use super::target::DiscretizedTarget;
use crate::error::{Error, Result};
use crate::exec::Execution;

const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const SELU_SCALE: f64 = 1.050_700_987_355_480_5;

/// Hidden-layer nonlinearity. The output layer is always a logistic sigmoid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Selu,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Selu => {
                if z > 0.0 {
                    SELU_SCALE * z
                } else {
                    SELU_SCALE * SELU_ALPHA * z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Selu => {
                if z > 0.0 {
                    SELU_SCALE
                } else {
                    SELU_SCALE * SELU_ALPHA * z.exp()
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-interval hazards `h_l(x)` for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardPrediction {
    pub hazards: Vec<f64>,
}

impl HazardPrediction {
    pub fn survival_curve(&self) -> Vec<f64> {
        super::survival_curve(&self.hazards)
    }
}

/// Feed-forward hazard network: dense layers with a hidden activation and a
/// sigmoid output of width `T`.
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// `out x in` weight matrix row-major followed by its `out` biases. Gradients
/// use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl HazardModel {
    /// Zero-initialized model. `dims` lists the input width, hidden widths
    /// and the output width `T`.
    pub fn zeros(dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::param("layer_dims", "need input and output widths, all positive"));
        }
        let n = param_count(&dims);
        Ok(Self {
            dims,
            activation,
            params: vec![0.0; n],
        })
    }

    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(dims: Vec<usize>, activation: Activation, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims, activation)?;
        for l in 0..model.num_layers() {
            let fan_in = model.dims[l];
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            let (w, _) = model.layer_mut(l);
            for v in w.iter_mut() {
                *v = normal.sample(rng);
            }
        }
        Ok(model)
    }

    pub fn from_params(dims: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(dims, activation)?;
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch {
                expected: model.params.len(),
                actual: params.len(),
            });
        }
        model.params = params;
        Ok(model)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn same_shape(&self, other: &HazardModel) -> bool {
        self.dims == other.dims && self.activation == other.activation
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.dims[..=l])
    }

    /// Weight matrix and bias vector of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let start = self.layer_offset(l);
        let (w, rest) = self.params[start..].split_at(i * o);
        (w, &rest[..o])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let start = self.layer_offset(l);
        let (w, rest) = self.params[start..].split_at_mut(i * o);
        (w, &mut rest[..o])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<HazardPrediction> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let z = self.affine(l, &a);
            a = if l == last {
                z.into_iter().map(sigmoid).collect()
            } else {
                z.into_iter().map(|v| self.activation.apply(v)).collect()
            };
        }
        Ok(HazardPrediction { hazards: a })
    }

    /// Survival curves for many inputs.
    pub fn predict_survival(&self, xs: &[&[f64]], exec: Execution) -> Result<Vec<Vec<f64>>> {
        for x in xs {
            self.check_input(x)?;
        }
        Ok(exec.map(xs, |x| self.forward(x).expect("checked").survival_curve()))
    }

    fn affine(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let n_in = a.len();
        b.iter()
            .enumerate()
            .map(|(o, &bias)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                bias + row.iter().zip(a).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }

    /// Loss and full-parameter gradient for one record.
    pub fn sample_gradient(&self, x: &[f64], target: &DiscretizedTarget) -> Result<SampleGradient> {
        self.check_input(x)?;
        if target.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: target.len(),
            });
        }
        Ok(self.backprop(x, target))
    }

    fn backprop(&self, x: &[f64], target: &DiscretizedTarget) -> SampleGradient {
        let layers = self.num_layers();
        // activations[l] feeds layer l; pre[l] is layer l's pre-activation
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers);
        activations.push(x.to_vec());
        for l in 0..layers {
            let z = self.affine(l, &activations[l]);
            let a = if l + 1 == layers {
                z.iter().map(|&v| sigmoid(v)).collect()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            activations.push(a);
        }
        let hazards = &activations[layers];
        let loss = nll_unchecked(hazards, target);

        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = hazards
            .iter()
            .zip(&target.surv)
            .zip(&target.fail)
            .map(|((&h, &s), &f)| logit_gradient(h, s, f))
            .collect();

        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let start = self.layer_offset(l);
            let a_prev = &activations[l];
            {
                let (gw, gb) = grad[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    gb[o] = d;
                    if d != 0.0 {
                        let row = &mut gw[o * n_in..(o + 1) * n_in];
                        for (g, &a) in row.iter_mut().zip(a_prev) {
                            *g = d * a;
                        }
                    }
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let z_prev = &pre[l - 1];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (acc, &wv) in next.iter_mut().zip(row) {
                        *acc += wv * d;
                    }
                }
                for (acc, &z) in next.iter_mut().zip(z_prev) {
                    *acc *= self.activation.derivative(z);
                }
                delta = next;
            }
        }
        SampleGradient { loss, grad }
    }
}

/// Loss value and parameter gradient of a single record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// One gradient per record. Summing them gives the gradient of the summed
/// batch loss.
pub fn per_sample_gradients(
    model: &HazardModel,
    batch: &[(&[f64], &DiscretizedTarget)],
    exec: Execution,
) -> Result<Vec<SampleGradient>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    for (x, t) in batch {
        model.check_input(x)?;
        if t.len() != model.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.output_dim(),
                actual: t.len(),
            });
        }
    }
    Ok(exec.map(batch, |(x, t)| model.backprop(x, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_model_outputs_half() {
        let m = HazardModel::zeros(vec![3, 4, 2], Activation::Selu).unwrap();
        let p = m.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(p.hazards, vec![0.5, 0.5]);
    }

    #[test]
    fn single_linear_layer() {
        let m = HazardModel::from_params(vec![1, 1], Activation::Selu, vec![0.0, 3f64.ln()]).unwrap();
        let p = m.forward(&[5.0]).unwrap();
        assert!((p.hazards[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let m = HazardModel::zeros(vec![3, 2], Activation::Selu).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bias_gradient_signs() {
        let m = HazardModel::zeros(vec![1, 1], Activation::Selu).unwrap();
        let survived = DiscretizedTarget { surv: vec![true], fail: vec![false] };
        let failed = DiscretizedTarget { surv: vec![false], fail: vec![true] };
        let g1 = m.sample_gradient(&[0.0], &survived).unwrap();
        let g2 = m.sample_gradient(&[0.0], &failed).unwrap();
        // d/dz [-log(1 - sigmoid z)] = 0.5 at z=0; d/dz [-log sigmoid z] = -0.5
        assert_eq!(g1.grad[1], 0.5);
        assert_eq!(g2.grad[1], -0.5);
    }

    #[test]
    fn identical_records_identical_gradients() {
        let mut rng = stream(&[7]);
        let m = HazardModel::new(vec![3, 5, 2], Activation::Selu, &mut rng).unwrap();
        let x = [0.1, -0.4, 1.2];
        let t = DiscretizedTarget { surv: vec![true, false], fail: vec![false, true] };
        let g = per_sample_gradients(&m, &[(&x, &t), (&x, &t)], Execution::Parallel).unwrap();
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn serde_round_trip() {
        let mut rng = stream(&[3]);
        let m = HazardModel::new(vec![2, 3, 2], Activation::Tanh, &mut rng).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: HazardModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
