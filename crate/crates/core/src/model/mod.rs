//! The implicit survival function.
//!
//! An encoder MLP maps covariates to a feature vector `z`; a head MLP maps
//! `z + PE(t)` to a conditional hazard in `(0, 1)`. Survival on a grid is
//! `exp` of the Simpson-integrated `ln(1 − ĥ)`, with `Ŝ(0) = 1` and
//! `Ŝ(t_K) = 0` imposed, and interval masses are differences of survival.

mod curves;
mod forward;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, NormStats};
use crate::encoding::{self, EncodingError};
use crate::math::{MathError, Tensor};
use crate::time_grid::GridError;

pub use curves::{IntervalMasses, Prediction, SurvivalCurve};
pub use forward::{BatchOutput, LOSS_FLOOR};

/// `ĥ` is clipped to `[HAZARD_CLAMP, 1 − HAZARD_CLAMP]` before `ln(1 − ĥ)`.
pub const HAZARD_CLAMP: f64 = 1e-7;

/// Initial bias of the head's output unit; `sigmoid(−2) ≈ 0.12`.
pub const HEAD_OUTPUT_BIAS_INIT: f64 = -2.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("covariate dimension mismatch: model expects {expected}, data has {got}")]
    FeatureDim { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid survival curve: {0}")]
    Curve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => crate::math::sigmoid(v),
        }
    }
}

/// Layer widths. The encoder's last width is the embedding dimension `d`;
/// the head always ends in a single sigmoid unit, appended implicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder_widths: Vec<usize>,
    pub head_hidden: Vec<usize>,
    /// Activation of every hidden layer. The encoder's output layer is linear.
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_widths: vec![256, 512, 256],
            head_hidden: vec![256, 256],
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn new(encoder_widths: Vec<usize>, head_hidden: Vec<usize>) -> Self {
        Self {
            encoder_widths,
            head_hidden,
            activation: Activation::Relu,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) || self.head_hidden.contains(&0) {
            return Err(ModelError::Architecture(format!(
                "widths must be positive and the encoder non-empty: {self:?}"
            )));
        }
        encoding::check_dimension(self.embed_dim())?;
        Ok(())
    }

    /// `(fan_in, fan_out)` of every encoder layer, then every head layer.
    fn layer_dims(&self, feature_dim: usize) -> (Vec<LayerDims>, Vec<LayerDims>) {
        let chain = |start: usize, widths: &[usize]| -> Vec<LayerDims> {
            let mut prev = start;
            widths
                .iter()
                .map(|&w| {
                    let dims = (prev, w);
                    prev = w;
                    dims
                })
                .collect()
        };
        let encoder = chain(feature_dim, &self.encoder_widths);
        let mut head_widths = self.head_hidden.clone();
        head_widths.push(1);
        let head = chain(self.embed_dim(), &head_widths);
        (encoder, head)
    }
}

/// `(fan_in, fan_out)`.
type LayerDims = (usize, usize);

/// Dense layer computing `W·x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[fan_out, fan_in]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[0]
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            weights: Tensor::matrix(fan_out, fan_in, data).expect("glorot dims"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        let w = self.weights.data();
        let n_in = self.fan_in();
        self.bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| b + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

/// Weights of the encoder and head plus everything needed to evaluate them
/// on raw covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub feature_dim: usize,
    pub architecture: Architecture,
    pub encoder: Vec<Layer>,
    pub head: Vec<Layer>,
    pub epsilon_train: f64,
    pub t_max: f64,
    pub norm: NormStats,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, head output bias at
    /// [`HEAD_OUTPUT_BIAS_INIT`].
    pub fn init(
        feature_dim: usize,
        architecture: Architecture,
        epsilon_train: f64,
        t_max: f64,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self, ModelError> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc_dims, head_dims) = architecture.layer_dims(feature_dim);
        let encoder = enc_dims.iter().map(|&(i, o)| Layer::glorot(i, o, &mut rng)).collect();
        let mut head: Vec<Layer> = head_dims.iter().map(|&(i, o)| Layer::glorot(i, o, &mut rng)).collect();
        head.last_mut().expect("head has an output layer").bias.data_mut()[0] = HEAD_OUTPUT_BIAS_INIT;
        let params = Self {
            feature_dim,
            architecture,
            encoder,
            head,
            epsilon_train,
            t_max,
            norm,
        };
        params.validate()?;
        Ok(params)
    }

    /// All-zero weights and biases: `z = 0` and `ĥ = 0.5` everywhere.
    pub fn zeros(feature_dim: usize, architecture: Architecture, epsilon_train: f64, t_max: f64) -> Result<Self, ModelError> {
        architecture.validate()?;
        let (enc_dims, head_dims) = architecture.layer_dims(feature_dim);
        let params = Self {
            feature_dim,
            encoder: enc_dims.iter().map(|&(i, o)| Layer::zeros(i, o)).collect(),
            head: head_dims.iter().map(|&(i, o)| Layer::zeros(i, o)).collect(),
            architecture,
            epsilon_train,
            t_max,
            norm: NormStats::identity(feature_dim),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn embed_dim(&self) -> usize {
        self.architecture.embed_dim()
    }

    /// Checks that layer shapes chain together and that `z` and `PE(t)` can be added.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.architecture.validate()?;
        let (enc_dims, head_dims) = self.architecture.layer_dims(self.feature_dim);
        let check = |layers: &[Layer], dims: &[(usize, usize)], part: &str| -> Result<(), ModelError> {
            if layers.len() != dims.len() {
                return Err(ModelError::Architecture(format!(
                    "{part} has {} layers, architecture needs {}",
                    layers.len(),
                    dims.len()
                )));
            }
            for (i, (l, &(fi, fo))) in layers.iter().zip(dims).enumerate() {
                if l.weights.shape() != [fo, fi] || l.bias.shape() != [fo] {
                    return Err(ModelError::Architecture(format!(
                        "{part} layer {i}: weights {:?}, bias {:?}, expected [{fo}, {fi}] and [{fo}]",
                        l.weights.shape(),
                        l.bias.shape()
                    )));
                }
            }
            Ok(())
        };
        check(&self.encoder, &enc_dims, "encoder")?;
        check(&self.head, &head_dims, "head")?;
        if self.norm.dim() != self.feature_dim || self.norm.std.len() != self.feature_dim {
            return Err(ModelError::Architecture(format!(
                "normalization covers {} covariates, model has {}",
                self.norm.dim(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order: encoder `(W, b)` pairs, then head pairs.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.encoder
            .iter()
            .chain(&self.head)
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(&mut self.head)
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }

    pub(crate) fn check_features(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.feature_dim {
            return Err(ModelError::FeatureDim {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Feature vector `z = E(x)` for raw covariates `x`.
    pub fn encode_sample(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_features(x)?;
        let mut h = self.norm.apply_to(x);
        let last = self.encoder.len() - 1;
        for (i, layer) in self.encoder.iter().enumerate() {
            h = layer.apply(&h);
            if i < last {
                h.iter_mut().for_each(|v| *v = self.architecture.activation.apply(*v));
            }
        }
        Ok(h)
    }

    /// `ĥ(t|x) = H(E(x) + PE(t))`, clipped to `[HAZARD_CLAMP, 1 − HAZARD_CLAMP]`.
    pub fn hazard(&self, x: &[f64], t: f64) -> Result<f64, ModelError> {
        let z = self.encode_sample(x)?;
        let pe = encoding::encode(t, self.embed_dim())?;
        let mut h: Vec<f64> = z.iter().zip(&pe).map(|(a, b)| a + b).collect();
        let last = self.head.len() - 1;
        for (i, layer) in self.head.iter().enumerate() {
            h = layer.apply(&h);
            if i < last {
                h.iter_mut().for_each(|v| *v = self.architecture.activation.apply(*v));
            }
        }
        Ok(crate::math::sigmoid(h[0]).clamp(HAZARD_CLAMP, 1.0 - HAZARD_CLAMP))
    }
}
