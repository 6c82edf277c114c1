//! Survival datasets: CSV ingestion, z-scoring, splitting and synthetic
//! generators whose true survival functions are known in closed form.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}, column `{column}`: {message}")]
    Cell { row: usize, column: String, message: String },
    #[error("row {row}: negative observed time {time}")]
    NegativeTime { row: usize, time: f64 },
    #[error("sample {index}: expected {expected} covariates, got {got}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("sample {index} (data row {}): observed time {time} exceeds t_max = {t_max}", index + 1)]
    TimeBeyondHorizon { index: usize, time: f64, t_max: f64 },
    #[error("dataset is empty")]
    Empty,
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub covariates: Vec<f64>,
    /// Event time when uncensored, last follow-up time otherwise.
    pub time: f64,
    pub censored: bool,
}

impl Sample {
    pub fn new(covariates: Vec<f64>, time: f64, censored: bool) -> Self {
        Self {
            covariates,
            time,
            censored,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(feature_dim: usize, samples: Vec<Sample>) -> Result<Self, DataError> {
        for (index, s) in samples.iter().enumerate() {
            if s.covariates.len() != feature_dim {
                return Err(DataError::DimensionMismatch {
                    index,
                    expected: feature_dim,
                    got: s.covariates.len(),
                });
            }
            if !(s.time.is_finite() && s.time >= 0.0) {
                return Err(DataError::NegativeTime { row: index + 1, time: s.time });
            }
            if let Some(column) = s.covariates.iter().position(|v| !v.is_finite()) {
                return Err(DataError::Cell {
                    row: index + 1,
                    column: format!("f{column}"),
                    message: "non-finite covariate".into(),
                });
            }
        }
        Ok(Self { feature_dim, samples })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn censoring_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.censored).count() as f64 / self.samples.len() as f64
    }

    pub fn max_time(&self) -> f64 {
        self.samples.iter().map(|s| s.time).fold(0.0, f64::max)
    }

    /// Fails on the first sample observed after `t_max`.
    pub fn check_horizon(&self, t_max: f64) -> Result<(), DataError> {
        match self.samples.iter().position(|s| s.time > t_max) {
            Some(index) => Err(DataError::TimeBeyondHorizon {
                index,
                time: self.samples[index].time,
                t_max,
            }),
            None => Ok(()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            feature_dim: self.feature_dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// CSV

const TIME: &str = "time";
const EVENT: &str = "event";

/// Reads `f0,…,f{p−1},time,event` (header required). Every column other than
/// `time` and `event` is a covariate, in file order. Rows are numbered from 1,
/// not counting the header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = File::open(path)?;
    read_csv(file)
}

pub fn read_csv(reader: impl io::Read) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let time_col = headers.iter().position(|h| h == TIME).ok_or(DataError::MissingColumn(TIME))?;
    let event_col = headers.iter().position(|h| h == EVENT).ok_or(DataError::MissingColumn(EVENT))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != time_col && c != event_col).collect();

    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |c: usize| -> Result<f64, DataError> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Cell {
                    row,
                    column: headers[c].to_string(),
                    message: format!("not a finite number: {raw:?}"),
                })
        };
        let covariates = feature_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>, _>>()?;
        let time = cell(time_col)?;
        if time < 0.0 {
            return Err(DataError::NegativeTime { row, time });
        }
        let censored = match cell(event_col)? {
            1.0 => false,
            0.0 => true,
            e => {
                return Err(DataError::Cell {
                    row,
                    column: EVENT.into(),
                    message: format!("event must be 0 or 1, got {e}"),
                })
            }
        };
        samples.push(Sample::new(covariates, time, censored));
    }
    Dataset::new(feature_cols.len(), samples)
}

pub fn write_csv(dataset: &Dataset, writer: impl Write) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..dataset.feature_dim()).map(|i| format!("f{i}")).collect();
    header.push(TIME.into());
    header.push(EVENT.into());
    w.write_record(&header)?;
    for s in dataset.samples() {
        let mut row: Vec<String> = s.covariates.iter().map(|v| v.to_string()).collect();
        row.push(s.time.to_string());
        row.push(if s.censored { "0" } else { "1" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = io::BufWriter::new(File::create(path)?);
    write_csv(dataset, file)
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-covariate mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns whose spread falls below this are treated as constant.
const MIN_STD: f64 = 1e-12;

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s < MIN_STD { 0.0 } else { (v - m) / s })
            .collect()
    }
}

pub fn normalize_fit(dataset: &Dataset) -> NormStats {
    let p = dataset.feature_dim();
    let n = dataset.len();
    if n == 0 {
        return NormStats::identity(p);
    }
    let mut mean = vec![0.0; p];
    for s in dataset.samples() {
        for (m, v) in mean.iter_mut().zip(&s.covariates) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; p];
    for s in dataset.samples() {
        for ((acc, v), m) in var.iter_mut().zip(&s.covariates).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    NormStats { mean, std }
}

pub fn normalize_apply(dataset: &Dataset, stats: &NormStats) -> Dataset {
    Dataset {
        feature_dim: dataset.feature_dim,
        samples: dataset
            .samples()
            .iter()
            .map(|s| Sample::new(stats.apply_to(&s.covariates), s.time, s.censored))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Splitting

pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadSplit(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = dataset.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(DataError::BadSplit(format!(
            "fraction {test_fraction} of {n} samples leaves an empty side"
        )));
    }
    let order = shuffled_indices(n, seed);
    let (test, train) = order.split_at(n_test);
    Ok((dataset.subset(train), dataset.subset(test)))
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Dataset,
    pub test: Dataset,
    /// Positions of the test samples in the source dataset.
    pub test_indices: Vec<usize>,
}

/// `k` disjoint test folds whose sizes differ by at most one.
pub fn k_fold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>, DataError> {
    let n = dataset.len();
    if k < 2 || k > n {
        return Err(DataError::BadSplit(format!("k must lie in [2, {n}], got {k}")));
    }
    let order = shuffled_indices(n, seed);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let test_indices = order[start..start + size].to_vec();
        let train_indices: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        folds.push(Fold {
            train: dataset.subset(&train_indices),
            test: dataset.subset(&test_indices),
            test_indices,
        });
        start += size;
    }
    Ok(folds)
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

// ---------------------------------------------------------------------------
// Synthetic data

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub covariate_dim: usize,
    /// Log-rate weights `w`; the event rate is `base_rate · exp(w·x)`.
    pub weights: Vec<f64>,
    pub base_rate: f64,
    /// Censoring times are drawn from `Uniform(0, censor_horizon)`.
    pub censor_horizon: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.n == 0 {
            return Err(DataError::BadSpec("n must be >= 1".into()));
        }
        if self.weights.len() != self.covariate_dim {
            return Err(DataError::BadSpec(format!(
                "{} weights for {} covariates",
                self.weights.len(),
                self.covariate_dim
            )));
        }
        if !(self.censor_horizon > 0.0) {
            return Err(DataError::BadSpec("censor horizon must be > 0".into()));
        }
        if !(self.base_rate > 0.0 && self.base_rate.is_finite()) {
            return Err(DataError::BadSpec("base rate must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential,
    /// `S(t) = exp(−(λt)^shape)`.
    Weibull { shape: f64 },
}

/// Ground truth behind a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SynthOracle {
    pub family: Family,
    /// Per-sample rate `λ(x)`.
    pub rates: Vec<f64>,
    /// Per-sample true event time, censored or not.
    pub true_times: Vec<f64>,
}

impl SynthOracle {
    pub fn survival(&self, index: usize, t: f64) -> f64 {
        let lt = self.rates[index] * t;
        match self.family {
            Family::Exponential => (-lt).exp(),
            Family::Weibull { shape } => (-lt.powf(shape)).exp(),
        }
    }
}

pub fn synth_exponential(spec: &SynthSpec) -> Result<(Dataset, SynthOracle), DataError> {
    synthesize(spec, Family::Exponential)
}

pub fn synth_weibull(spec: &SynthSpec, shape: f64) -> Result<(Dataset, SynthOracle), DataError> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(DataError::BadSpec(format!("Weibull shape must be > 0, got {shape}")));
    }
    synthesize(spec, Family::Weibull { shape })
}

fn synthesize(spec: &SynthSpec, family: Family) -> Result<(Dataset, SynthOracle), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let covariates: Vec<Vec<f64>> = (0..spec.n)
        .map(|_| (0..spec.covariate_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    draw_times(covariates, spec, family, &mut rng)
}

/// Exponential times for caller-chosen covariates (e.g. clustered designs).
/// `spec.n` and `spec.covariate_dim` are taken from `covariates`.
pub fn synth_from_covariates(
    covariates: Vec<Vec<f64>>,
    spec: &SynthSpec,
) -> Result<(Dataset, SynthOracle), DataError> {
    let spec = SynthSpec {
        n: covariates.len(),
        covariate_dim: covariates.first().map_or(spec.covariate_dim, Vec::len),
        ..spec.clone()
    };
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    draw_times(covariates, &spec, Family::Exponential, &mut rng)
}

fn draw_times(
    covariates: Vec<Vec<f64>>,
    spec: &SynthSpec,
    family: Family,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, SynthOracle), DataError> {
    let mut samples = Vec::with_capacity(covariates.len());
    let mut rates = Vec::with_capacity(covariates.len());
    let mut true_times = Vec::with_capacity(covariates.len());
    for x in covariates {
        let score: f64 = x.iter().zip(&spec.weights).map(|(a, b)| a * b).sum();
        let rate = spec.base_rate * score.exp();
        // Inverse-CDF draw; 1 − u lies in (0, 1].
        let u: f64 = rng.random();
        let e = -(1.0 - u).ln();
        let t = match family {
            Family::Exponential => e / rate,
            Family::Weibull { shape } => e.powf(1.0 / shape) / rate,
        };
        let c = rng.random::<f64>() * spec.censor_horizon;
        let censored = t > c;
        samples.push(Sample::new(x, if censored { c } else { t }, censored));
        rates.push(rate);
        true_times.push(t);
    }
    let dataset = Dataset::new(spec.covariate_dim, samples)?;
    Ok((dataset, SynthOracle { family, rates, true_times }))
}
