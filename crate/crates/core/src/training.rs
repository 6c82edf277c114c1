//! Maximum-likelihood training with Adam and decoupled weight decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{normalize_fit, DataError, Dataset, Sample};
use crate::encoding::NodeEmbeddings;
use crate::math::Tensor;
use crate::model::{Architecture, ModelError, ModelParams};
use crate::time_grid::TimeGrid;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("optimizer shape mismatch: {0}")]
    Shape(String),
}

impl From<crate::time_grid::GridError> for TrainError {
    fn from(e: crate::time_grid::GridError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub epsilon_train: f64,
    pub t_max: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            epsilon_train: 1.0,
            t_max: 400.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon_train", self.epsilon_train),
            ("t_max", self.t_max),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrainError::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(TrainError::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(TrainError::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        self.architecture.validate()?;
        TimeGrid::new(self.t_max, self.epsilon_train)?;
        Ok(())
    }
}

/// First and second moment estimates, one pair of tensors per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is decoupled: each parameter
/// is shrunk by `lr · weight_decay · p` directly, outside the moment estimates.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::Shape(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(TrainError::Shape(format!(
                "tensor {i}: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }
    state.step += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let lr = config.learning_rate;
    let decay = lr * config.weight_decay;
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let pd = p.data_mut();
        for (((w, &gi), mi), vi) in pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= decay * *w + lr * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

/// Index batches for one epoch: a permutation seeded by `(seed, epoch)`,
/// cut into consecutive chunks of `batch_size`.
pub fn batch_iterator(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Mean masked negative log-likelihood over the batches of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Total samples whose likelihood hit the loss floor.
    pub floor_incidents: usize,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Fits normalization on `dataset`, initializes the network from `config.seed`
/// and runs `config.epochs` epochs of minibatch Adam.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(dataset, config, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean loss)` after each epoch.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(DataError::Empty.into());
    }
    dataset.check_horizon(config.t_max)?;
    let grid = TimeGrid::new(config.t_max, config.epsilon_train)?;
    let norm = normalize_fit(dataset);
    let mut params = ModelParams::init(
        dataset.feature_dim(),
        config.architecture.clone(),
        config.epsilon_train,
        config.t_max,
        norm,
        config.seed,
    )?;
    let emb = NodeEmbeddings::new(grid, params.embed_dim()).map_err(ModelError::from)?;
    let mut state = AdamState::new(&params.tensors());
    let mut history = TrainHistory {
        epoch_losses: Vec::with_capacity(config.epochs),
        floor_incidents: 0,
    };

    for epoch in 0..config.epochs {
        let batches = batch_iterator(dataset.len(), config.batch_size, config.seed, epoch as u64);
        let mut weighted = 0.0;
        for batch in &batches {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &dataset.samples()[i]).collect();
            let out = params.batch_loss_with(&samples, &emb, true)?;
            weighted += out.loss * batch.len() as f64;
            history.floor_incidents += out.floored;
            let grads = out.grads.expect("gradients requested");
            adam_step(&mut params.tensors_mut(), &grads, &mut state, config)?;
        }
        let mean = weighted / dataset.len() as f64;
        history.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainOutcome { params, history })
}
