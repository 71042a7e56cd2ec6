//! Neural surrogate mapping a permeability patch to an online basis function.

pub mod checkpoint;
pub mod model;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use model::{gradient_check, Activation, Gradients, Initializer, Layer, MlpModel};

use crate::error::{Error, Result};
use crate::grids::extract_from_patch;
use crate::metrics::RelError;
use crate::msfem_offline::{BasisColumn, ColumnKind, MsContext};
use crate::random_fields::keyed_rng;

/// Per-feature `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureBounds {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut it = rows.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Input("cannot fit bounds on an empty set".into()))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in it {
            if row.len() != min.len() {
                return Err(Error::Dimension {
                    expected: min.len(),
                    actual: row.len(),
                });
            }
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn is_constant(&self, i: usize) -> bool {
        self.max[i] == self.min[i]
    }

    /// `x' = 2(x − min)/(max − min) − 1`; constant features map to 0.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.is_constant(i) {
                    0.0
                } else {
                    2.0 * (v - self.min[i]) / (self.max[i] - self.min[i]) - 1.0
                }
            })
            .collect()
    }

    /// Inverse of [`Self::normalize`]; constant features map back to `min`.
    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.is_constant(i) {
                    self.min[i]
                } else {
                    (v + 1.0) * 0.5 * (self.max[i] - self.min[i]) + self.min[i]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationBounds {
    pub input: FeatureBounds,
    pub output: FeatureBounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update of every parameter tensor.
pub fn adam_step(params: Vec<&mut [f64]>, grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, epsilon } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.m[k].len() != p.len() {
            return Err(Error::Dimension {
                expected: p.len(),
                actual: g.len(),
            });
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// `(1/N) Σ ‖ŷ − y‖²`.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Dimension {
            expected: targets.len(),
            actual: predictions.len(),
        });
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 100,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(format!(
                "learning_rate, batch_size and epochs must be positive: {self:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn validation_count(&self, n: usize) -> usize {
        (self.validation_fraction * n as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub bounds: NormalizationBounds,
    /// Training-split loss of the initial model (normalized units).
    pub initial_loss: f64,
    pub history: Vec<EpochLoss>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(self.initial_loss, |h| h.train_loss)
    }
}

fn gather(rows: &[Vec<f64>], idx: &[usize], bounds: &FeatureBounds) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(bounds.len(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m.set_column(c, &nalgebra::DVector::from_vec(bounds.normalize(&rows[i])));
    }
    m
}

fn loss_on(model: &MlpModel, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() == 0 {
        return Ok(0.0);
    }
    let pred = model.forward_batch(x)?;
    Ok((pred - y).norm_squared() / x.ncols() as f64)
}

/// Mini-batch Adam on the MSE loss in normalized units. Bounds are fitted on
/// the training split only.
pub fn train(model: MlpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = inputs.len();
    if n == 0 || targets.len() != n {
        return Err(Error::Input(format!(
            "training needs matching nonempty inputs and targets ({n} vs {})",
            targets.len()
        )));
    }
    let n_val = cfg.validation_count(n);
    if n_val >= n {
        return Err(Error::Config("validation split leaves no training samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed_rng(cfg.seed, &[0x5350_4C49]));
    let validation_indices = order[..n_val].to_vec();
    let mut train_indices = order[n_val..].to_vec();
    train_indices.sort_unstable();

    let bounds = NormalizationBounds {
        input: FeatureBounds::fit(train_indices.iter().map(|&i| inputs[i].as_slice()))?,
        output: FeatureBounds::fit(train_indices.iter().map(|&i| targets[i].as_slice()))?,
    };
    let x_all = gather(inputs, &train_indices, &bounds.input);
    let y_all = gather(targets, &train_indices, &bounds.output);
    let x_val = gather(inputs, &validation_indices, &bounds.input);
    let y_val = gather(targets, &validation_indices, &bounds.output);

    let mut model = model;
    let initial_loss = loss_on(&model, &x_all, &y_all)?;
    let mut adam = AdamState::new(AdamConfig::default());
    let mut history = Vec::with_capacity(cfg.epochs);
    let n_train = train_indices.len();
    let mut perm: Vec<usize> = (0..n_train).collect();
    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut keyed_rng(cfg.seed, &[0x4550_4F43, epoch as u64]));
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in perm.chunks(cfg.batch_size).enumerate() {
            let x = x_all.select_columns(chunk);
            let y = y_all.select_columns(chunk);
            let (loss, grads) = model.loss_and_gradients(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b + 1 });
            }
            adam_step(model.params_mut(), &grads.slices(), &mut adam, cfg.learning_rate)?;
            sum += loss;
            batches += 1;
        }
        let validation_loss = (n_val > 0).then(|| loss_on(&model, &x_val, &y_val)).transpose()?;
        let entry = EpochLoss {
            epoch: epoch + 1,
            train_loss: sum / batches as f64,
            validation_loss,
        };
        log::debug!("epoch {}: train {:.6e}, validation {:?}", entry.epoch, entry.train_loss, validation_loss);
        history.push(entry);
    }
    Ok(TrainOutcome {
        model,
        bounds,
        initial_loss,
        history,
        train_indices,
        validation_indices,
    })
}

/// Normalize, run the network, denormalize.
pub fn predict_basis(model: &MlpModel, bounds: &NormalizationBounds, kappa_patch: &[f64]) -> Result<Vec<f64>> {
    if kappa_patch.len() != model.input_dim() || bounds.input.len() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: kappa_patch.len(),
        });
    }
    let z = model.forward(&bounds.input.normalize(kappa_patch))?;
    Ok(bounds.output.denormalize(&z))
}

/// Batch version of [`predict_basis`].
pub fn predict_many(model: &MlpModel, bounds: &NormalizationBounds, patches: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if patches.is_empty() {
        return Ok(Vec::new());
    }
    let idx: Vec<usize> = (0..patches.len()).collect();
    if let Some(p) = patches.iter().find(|p| p.len() != model.input_dim()) {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: p.len(),
        });
    }
    let out = model.forward_batch(&gather(patches, &idx, &bounds.input))?;
    Ok(out
        .column_iter()
        .map(|c| bounds.output.denormalize(c.as_slice()))
        .collect())
}

/// Turns a predicted patch into a basis column of `ω_j`: values outside
/// `ω_j`, on `∂ω_j` and on `∂Ω` are discarded.
pub fn predicted_column(ctx: &MsContext, j: usize, patch: &[f64]) -> Result<BasisColumn> {
    let nb = &ctx.neighborhoods[j];
    let mut local = extract_from_patch(nb, patch)?;
    for (l, v) in local.iter_mut().enumerate() {
        if nb.local_boundary_flags[l] || ctx.fine.boundary_node_flags[nb.fine_node_indices[l]] {
            *v = 0.0;
        }
    }
    Ok(BasisColumn {
        vertex: j,
        index: 0,
        kind: ColumnKind::Predicted,
        nodes: nb.fine_node_indices.clone(),
        values: local,
        x_range: nb.x_range,
        y_range: nb.y_range,
    })
}

/// `√(Σ‖ŷ − y‖² / Σ‖y‖²)` in physical units.
pub fn rmse(model: &MlpModel, bounds: &NormalizationBounds, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<RelError> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Input("RMSE needs matching nonempty inputs and targets".into()));
    }
    let preds = predict_many(model, bounds, inputs)?;
    Ok(rmse_values(&preds, targets))
}

pub fn rmse_values(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> RelError {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        for (a, b) in p.iter().zip(t) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    RelError::from_squares(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        let b = FeatureBounds {
            min: vec![0.0, 5.0, 3.0],
            max: vec![2000.0, 7.0, 3.0],
        };
        assert_eq!(b.normalize(&[1000.0, 5.0, 3.0]), vec![0.0, -1.0, 0.0]);
        assert_eq!(b.normalize(&[2000.0, 7.0, 9.0]), vec![1.0, 1.0, 0.0]);
        assert_eq!(b.denormalize(&[0.0, 0.0, 0.7]), vec![1000.0, 6.0, 3.0]);
        let x = [123.456, 6.3, 3.0];
        let back = b.denormalize(&b.normalize(&x));
        for (a, c) in back.iter().zip(&x) {
            assert!((a - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn adam_hand_example() {
        let mut theta = [0.0];
        let mut state = AdamState::new(AdamConfig::default());
        adam_step(vec![&mut theta], &[&[1.0]], &mut state, 1e-4).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + ε)
        assert!((theta[0] - (-1e-4 / (1.0 + 1e-8))).abs() <= 1e-12);
        assert!((theta[0] - (-9.99999994e-5)).abs() <= 1e-12);
        assert_eq!(state.t, 1);
        let mut theta = [0.5];
        let mut state = AdamState::new(AdamConfig::default());
        adam_step(vec![&mut theta], &[&[0.0]], &mut state, 1e-4).unwrap();
        assert_eq!(theta[0], 0.5);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[vec![1.0, 1.0]], &[vec![0.0, 0.0]]).unwrap(), 2.0);
        assert_eq!(mse_loss(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]).unwrap(), 0.0);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_values(&[vec![1.0]], &[vec![2.0]]).value, 0.5);
        assert_eq!(rmse_values(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).value, 1.0);
        assert_eq!(rmse_values(&[vec![3.0, 4.0]], &[vec![3.0, 4.0]]).value, 0.0);
    }

    #[test]
    fn zero_model_predicts_output_midpoint() {
        let mut model = MlpModel::init(&[3, 4, 3], 0).unwrap();
        for p in model.params_mut() {
            p.fill(0.0);
        }
        let bounds = NormalizationBounds {
            input: FeatureBounds { min: vec![0.0; 3], max: vec![1.0; 3] },
            output: FeatureBounds { min: vec![-1.0, 0.0, 2.0], max: vec![1.0, 4.0, 2.0] },
        };
        assert_eq!(predict_basis(&model, &bounds, &[0.1, 0.2, 0.3]).unwrap(), vec![0.0, 2.0, 2.0]);
        assert!(predict_basis(&model, &bounds, &[0.1]).is_err());
    }

    #[test]
    fn tiny_overfit() {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0]).collect();
        let targets: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64).sqrt()]).collect();
        let model = MlpModel::init(&[3, 32, 32, 32, 2], 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 10,
            epochs: 200,
            validation_fraction: 0.0,
            seed: 1,
        };
        let out = train(model, &inputs, &targets, &cfg).unwrap();
        assert!(out.final_loss() < 1e-4 * out.initial_loss, "{} vs {}", out.final_loss(), out.initial_loss);
    }

    #[test]
    fn validation_split_size() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.validation_count(250), 50);
        assert_eq!(cfg.validation_count(7), 1);
    }
}
