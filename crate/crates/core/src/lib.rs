//! Survival analysis with an implicit survival function.
//!
//! A neural network regresses the conditional hazard `ĥ(t | x)` from
//! covariates and a sinusoidal embedding of time. Survival curves come from
//! Simpson integration of `ln(1 − ĥ)` over a uniform time grid, training
//! maximizes a censoring-aware discrete likelihood, and models are scored by
//! time-dependent concordance.
//!
//! ```
//! use isf::data::{synth_exponential, SynthSpec};
//! use isf::model::Architecture;
//! use isf::time_grid::TimeGrid;
//! use isf::training::{train, TrainConfig};
//!
//! let spec = SynthSpec {
//!     n: 64,
//!     covariate_dim: 2,
//!     weights: vec![0.5, -0.5],
//!     base_rate: 0.2,
//!     censor_horizon: 10.0,
//!     seed: 1,
//! };
//! let (data, _oracle) = synth_exponential(&spec).unwrap();
//! let config = TrainConfig {
//!     epochs: 2,
//!     t_max: 10.0,
//!     architecture: Architecture::new(vec![8, 8], vec![8]),
//!     ..TrainConfig::default()
//! };
//! let model = train(&data, &config).unwrap().params;
//! let curve = model.survival_curve(&[0.0, 1.0], &TimeGrid::new(10.0, 1.0).unwrap()).unwrap();
//! assert_eq!(curve.values()[0], 1.0);
//! ```

pub mod cli;
pub mod data;
pub mod encoding;
pub mod evaluation;
pub mod math;
pub mod model;
pub mod model_file;
pub mod time_grid;
pub mod training;

pub use data::{Dataset, Sample};
pub use model::{ModelParams, SurvivalCurve};
pub use time_grid::TimeGrid;
pub use training::{train, TrainConfig};
