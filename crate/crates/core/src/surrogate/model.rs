//! Fully connected network with exact batch backpropagation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_fields::keyed_rng;

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Selu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp()
                }
            }
        }
    }

    /// Whether the derivative jumps at 0.
    pub fn has_kink(self) -> bool {
        !matches!(self, Activation::Linear)
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Selu => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Selu),
            t => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// `N(0, 1/fan_in)`.
    LecunNormal,
    /// `N(0, 2/fan_in)`.
    HeNormal,
    /// `N(0, 0.05²)`.
    Normal,
}

impl Initializer {
    pub fn std_dev(self, fan_in: usize) -> f64 {
        match self {
            Initializer::LecunNormal => (1.0 / fan_in as f64).sqrt(),
            Initializer::HeNormal => (2.0 / fan_in as f64).sqrt(),
            Initializer::Normal => 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub biases: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.biases;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

/// SELU on the first hidden layer, ReLU on the others, linear output.
pub fn default_activations(n_layers: usize) -> Vec<Activation> {
    (0..n_layers)
        .map(|l| {
            if l + 1 == n_layers {
                Activation::Linear
            } else if l == 0 {
                Activation::Selu
            } else {
                Activation::Relu
            }
        })
        .collect()
}

pub fn default_initializers(n_layers: usize) -> Vec<Initializer> {
    (0..n_layers)
        .map(|l| match l {
            0 => Initializer::LecunNormal,
            1 => Initializer::HeNormal,
            _ => Initializer::Normal,
        })
        .collect()
}

/// Per-layer gradients, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpModel {
    /// Random model with the default activations and initializers.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let n = layer_sizes.len().saturating_sub(1);
        Self::init_with(layer_sizes, &default_activations(n), &default_initializers(n), seed)
    }

    pub fn init_with(
        layer_sizes: &[usize],
        activations: &[Activation],
        initializers: &[Initializer],
        seed: u64,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least input and output sizes".into()));
        }
        if let Some(i) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!("layer {i} has zero width")));
        }
        let n = layer_sizes.len() - 1;
        if activations.len() != n || initializers.len() != n {
            return Err(Error::Config(format!(
                "{n} layers need {n} activations and initializers, got {} and {}",
                activations.len(),
                initializers.len()
            )));
        }
        let mut rng = keyed_rng(seed, &[0x4D4C50]);
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
                let dist = Normal::new(0.0, initializers[l].std_dev(fan_in)).expect("finite std dev");
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(&mut rng)),
                    biases: DVector::zeros(fan_out),
                    activation: activations[l],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Layer::fan_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: rows,
            });
        }
        Ok(())
    }

    /// Forward pass on one normalized input.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z.len())?;
        let out = self.forward_batch(&DMatrix::from_column_slice(z.len(), 1, z))?;
        Ok(out.as_slice().to_vec())
    }

    /// Forward pass on a batch stored one sample per column.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x.nrows())?;
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&a);
            if layer.activation != Activation::Linear {
                z.apply(|v| *v = layer.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Smallest `|pre-activation|` over all kinked layers for input `x`.
    pub fn min_kink_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x.len())?;
        let mut a = DMatrix::from_column_slice(x.len(), 1, x);
        let mut closest = f64::INFINITY;
        for layer in &self.layers {
            let mut z = layer.affine(&a);
            if layer.activation.has_kink() {
                closest = z.iter().fold(closest, |c, v| c.min(v.abs()));
            }
            z.apply(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        Ok(closest)
    }

    /// Mean squared-distance loss over the batch and its exact gradients.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Gradients)> {
        self.check_input(x.nrows())?;
        if y.nrows() != self.output_dim() || y.ncols() != x.ncols() {
            return Err(Error::Dimension {
                expected: self.output_dim() * x.ncols(),
                actual: y.len(),
            });
        }
        let batch = x.ncols() as f64;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            let z = layer.affine(&a);
            let next = if layer.activation == Activation::Linear {
                z.clone()
            } else {
                z.map(|v| layer.activation.apply(v))
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        let diff = &a - y;
        let loss = diff.norm_squared() / batch;
        let mut delta = diff * (2.0 / batch);
        let n = self.layers.len();
        let mut gw = vec![DMatrix::zeros(0, 0); n];
        let mut gb = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activation != Activation::Linear {
                delta.zip_apply(&pre[l], |d, z| *d *= layer.activation.derivative(z));
            }
            gw[l] = &delta * inputs[l].transpose();
            gb[l] = delta.column_sum();
            if l > 0 {
                delta = layer.weights.transpose() * &delta;
            }
        }
        Ok((loss, Gradients { weights: gw, biases: gb }))
    }

    /// Mutable views of every parameter tensor, in layer order (weights then biases).
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.biases.as_mut_slice());
        }
        out
    }
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}

/// Central finite-difference check of [`MlpModel::loss_and_gradients`] on one
/// sample. Returns the largest `|g − g_fd| / max(|g|, |g_fd|, 1e-4)`.
pub fn gradient_check(model: &MlpModel, x: &[f64], y: &[f64]) -> Result<f64> {
    const EPS: f64 = 1e-6;
    const FLOOR: f64 = 1e-4;
    let xm = DMatrix::from_column_slice(x.len(), 1, x);
    let ym = DMatrix::from_column_slice(y.len(), 1, y);
    let (_, grads) = model.loss_and_gradients(&xm, &ym)?;
    let analytic: Vec<f64> = grads.slices().concat();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let n_tensors = 2 * model.layers.len();
    for t in 0..n_tensors {
        let len = probe.params_mut()[t].len();
        for i in 0..len {
            let orig = probe.params_mut()[t][i];
            let (up, down) = (orig + EPS, orig - EPS);
            probe.params_mut()[t][i] = up;
            let (lp, _) = probe.loss_and_gradients(&xm, &ym)?;
            probe.params_mut()[t][i] = down;
            let (lm, _) = probe.loss_and_gradients(&xm, &ym)?;
            probe.params_mut()[t][i] = orig;
            let fd = (lp - lm) / (up - down);
            let a = analytic[flat];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR));
            flat += 1;
        }
    }
    Ok(worst)
}

/// Random input whose pre-activations all stay at least `margin` away from 0.
pub fn kink_free_input<R: Rng>(model: &MlpModel, rng: &mut R, margin: f64) -> Result<Vec<f64>> {
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if model.min_kink_distance(&x)? >= margin {
            return Ok(x);
        }
    }
    Err(Error::Numerical("no kink-free input found in 10000 draws".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Selu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Selu.apply(1.0), 1.0507009873554805);
        assert!((Activation::Selu.apply(-1.0) - SELU_LAMBDA * SELU_ALPHA * ((-1f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_selu_unit() {
        let model = MlpModel {
            layers: vec![Layer {
                weights: DMatrix::from_element(1, 1, 1.0),
                biases: DVector::zeros(1),
                activation: Activation::Selu,
            }],
        };
        assert_eq!(model.forward(&[1.0]).unwrap(), vec![1.0507009873554805]);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut model = MlpModel::init(&[4, 6, 5, 3, 4], 1).unwrap();
        for p in model.params_mut() {
            p.fill(0.0);
        }
        assert_eq!(model.forward(&[0.3, -1.0, 2.0, 5.0]).unwrap(), vec![0.0; 4]);
        assert!(matches!(model.forward(&[1.0]), Err(Error::Dimension { expected: 4, actual: 1 })));
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = MlpModel::init(&[5, 7, 6, 4, 5], 11).unwrap();
        assert_eq!(a, MlpModel::init(&[5, 7, 6, 4, 5], 11).unwrap());
        assert_ne!(a, MlpModel::init(&[5, 7, 6, 4, 5], 12).unwrap());
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let acts: Vec<_> = a.layers.iter().map(|l| l.activation).collect();
        assert_eq!(acts, vec![Activation::Selu, Activation::Relu, Activation::Relu, Activation::Linear]);
        assert!(MlpModel::init(&[5, 0, 5], 1).is_err());
        assert!(MlpModel::init(&[5], 1).is_err());
    }

    #[test]
    fn lecun_variance() {
        let m = MlpModel::init(&[400, 300, 10], 3).unwrap();
        let w = &m.layers[0].weights;
        let mean = w.mean();
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!((var * 400.0 - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn linear_model_gradient_is_exact() {
        let lin = [Activation::Linear; 2];
        let init = [Initializer::LecunNormal; 2];
        let model = MlpModel::init_with(&[3, 4, 2], &lin, &init, 5).unwrap();
        let x = [0.5, -0.8, 0.3];
        // small residual: the finite-difference round-off floor scales with the loss
        let y: Vec<f64> = model.forward(&x).unwrap().iter().zip([0.1, -0.1]).map(|(a, b)| a + b).collect();
        let dev = gradient_check(&model, &x, &y).unwrap();
        assert!(dev <= 1e-9, "{dev}");
    }
}
