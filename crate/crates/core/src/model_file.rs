//! Versioned, human-readable model files (pretty-printed JSON).
//!
//! Weights are stored per layer as flat row-major arrays. Floats are written
//! in shortest round-trip form, so load → save reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NormStats;
use crate::math::Tensor;
use crate::model::{Activation, Architecture, Layer, ModelError, ModelParams};
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported model format version {found} (this build reads {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_dim: usize,
    pub encoder_widths: Vec<usize>,
    /// Head widths including the final single output unit.
    pub head_widths: Vec<usize>,
    pub activation: Activation,
    pub embed_dim: usize,
    pub epsilon_train: f64,
    pub t_max: f64,
    pub normalization: NormStats,
    pub seed: Option<u64>,
    pub train_config: Option<TrainConfig>,
    pub encoder: Vec<LayerRecord>,
    pub head: Vec<LayerRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn record(layer: &Layer) -> LayerRecord {
    LayerRecord {
        fan_in: layer.fan_in(),
        fan_out: layer.fan_out(),
        weights: layer.weights.data().to_vec(),
        bias: layer.bias.data().to_vec(),
    }
}

fn layer(rec: &LayerRecord) -> Result<Layer, ModelError> {
    Ok(Layer {
        weights: Tensor::matrix(rec.fan_out, rec.fan_in, rec.weights.clone())?,
        bias: Tensor::new(vec![rec.fan_out], rec.bias.clone())?,
    })
}

impl ModelFile {
    pub fn from_params(params: &ModelParams, train_config: Option<&TrainConfig>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            feature_dim: params.feature_dim,
            encoder_widths: params.architecture.encoder_widths.clone(),
            head_widths: params.head.iter().map(Layer::fan_out).collect(),
            activation: params.architecture.activation,
            embed_dim: params.embed_dim(),
            epsilon_train: params.epsilon_train,
            t_max: params.t_max,
            normalization: params.norm.clone(),
            seed: train_config.map(|c| c.seed),
            train_config: train_config.cloned(),
            encoder: params.encoder.iter().map(record).collect(),
            head: params.head.iter().map(record).collect(),
        }
    }

    pub fn to_params(&self) -> Result<ModelParams, ModelError> {
        let head_hidden = self.head_widths[..self.head_widths.len().saturating_sub(1)].to_vec();
        let params = ModelParams {
            feature_dim: self.feature_dim,
            architecture: Architecture {
                encoder_widths: self.encoder_widths.clone(),
                head_hidden,
                activation: self.activation,
            },
            encoder: self.encoder.iter().map(layer).collect::<Result<_, _>>()?,
            head: self.head.iter().map(layer).collect::<Result<_, _>>()?,
            epsilon_train: self.epsilon_train,
            t_max: self.t_max,
            norm: self.normalization.clone(),
        };
        params.validate()?;
        if params.embed_dim() != self.embed_dim {
            return Err(ModelError::Architecture(format!(
                "embed_dim {} disagrees with encoder output width {}",
                self.embed_dim,
                params.embed_dim()
            )));
        }
        Ok(params)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model files serialize");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelFileError> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(ModelFileError::Version {
                found: probe.format_version,
            });
        }
        let file: ModelFile = serde_json::from_str(text)?;
        file.to_params()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
