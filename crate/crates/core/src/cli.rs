//! Command-line interface: synthesis, training, prediction, evaluation,
//! ε-ablation and cross-validation.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::data::{k_fold, load_csv, split, synth_exponential, write_csv, DataError, Dataset, SynthSpec};
use crate::evaluation::{concordance, CiReport, CiVariant};
use crate::model::{Activation, Architecture, ModelError, ModelParams, SurvivalCurve};
use crate::model_file::{ModelFile, ModelFileError};
use crate::time_grid::{GridError, TimeGrid};
use crate::training::{train_with, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "isf", version, about = "Implicit survival function models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic exponential proportional-hazards dataset.
    Synth(SynthArgs),
    /// Train a model and write it to a model file.
    Train(TrainCmd),
    /// Write predicted survival curves for every row of a dataset.
    Predict(PredictArgs),
    /// Score a model with the concordance index.
    Eval(EvalArgs),
    /// Retrain per training ε and score per inference ε on a held-out split.
    AblateEpsilon(AblateArgs),
    /// K-fold cross-validation.
    Cv(CvArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Literal,
    Antolini,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SingleMetric {
    Literal,
    Antolini,
}

impl From<SingleMetric> for CiVariant {
    fn from(m: SingleMetric) -> Self {
        match m {
            SingleMetric::Literal => CiVariant::Literal,
            SingleMetric::Antolini => CiVariant::Antolini,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Sigmoid,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Comma-separated log-rate weights; defaults to 0.5 for every covariate.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub base_rate: f64,
    /// Censoring times are uniform on (0, horizon).
    #[arg(long, default_value_t = 100.0)]
    pub censor_horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Grid spacing used during training.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 400.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub wd: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [256, 512, 256])]
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the hazard head (the single output unit is implied).
    #[arg(long, value_delimiter = ',', default_values_t = [256, 256])]
    pub head_widths: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Print the mean loss after every epoch.
    #[arg(long)]
    pub verbose: bool,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        self.config_at(self.epsilon)
    }

    fn config_at(&self, epsilon: f64) -> TrainConfig {
        let activation = match self.activation {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Sigmoid => Activation::Sigmoid,
        };
        TrainConfig {
            learning_rate: self.lr,
            weight_decay: self.wd,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            epsilon_train: epsilon,
            t_max: self.tmax,
            architecture: Architecture {
                encoder_widths: self.encoder_widths.clone(),
                head_hidden: self.head_widths.clone(),
                activation,
            },
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Grid spacing for inference; defaults to the training spacing.
    #[arg(long)]
    pub epsilon_infer: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epsilon_infer: Option<f64>,
    #[arg(long, value_enum, default_value_t = Metric::Both)]
    pub metric: Metric,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub train_eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub infer_eps: Vec<f64>,
    /// Fraction of rows held out for scoring.
    #[arg(long, default_value_t = 0.33)]
    pub test_fraction: f64,
    #[arg(long, value_enum, default_value_t = SingleMetric::Antolini)]
    pub metric: SingleMetric,
    #[command(flatten)]
    pub train: TrainArgs,
    /// CSV destination; the table goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub epsilon_infer: Option<f64>,
    #[arg(long, value_enum, default_value_t = SingleMetric::Antolini)]
    pub metric: SingleMetric,
    #[command(flatten)]
    pub train: TrainArgs,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::AblateEpsilon(a) => cmd_ablate_epsilon(&a),
        Command::Cv(a) => cmd_cv(&a),
    }
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed command leaves nothing behind.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let weights = a.weights.clone().unwrap_or_else(|| vec![0.5; a.dim]);
    let spec = SynthSpec {
        n: a.n,
        covariate_dim: a.dim,
        weights,
        base_rate: a.base_rate,
        censor_horizon: a.censor_horizon,
        seed: a.seed,
    };
    let (data, _) = synth_exponential(&spec)?;
    write_atomic(&a.out, |w| Ok(write_csv(&data, w)?))?;
    println!("wrote {} rows to {}", data.len(), a.out.display());
    println!("censoring rate {:.4}", data.censoring_rate());
    Ok(())
}

fn fit(data: &Dataset, config: &TrainConfig, verbose: bool) -> Result<(ModelParams, Option<f64>), CliError> {
    let outcome = train_with(data, config, |epoch, loss| {
        if verbose {
            println!("epoch {} loss {loss:.6}", epoch + 1);
        }
    })?;
    if outcome.history.floor_incidents > 0 {
        eprintln!(
            "warning: {} sample likelihoods were floored during training",
            outcome.history.floor_incidents
        );
    }
    Ok((outcome.params, outcome.history.epoch_losses.last().copied()))
}

fn cmd_train(a: &TrainCmd) -> Result<(), CliError> {
    let data = load_csv(&a.data)?;
    let config = a.train.config();
    let start = Instant::now();
    let (params, last) = fit(&data, &config, a.train.verbose)?;
    let elapsed = start.elapsed().as_secs_f64();
    let text = ModelFile::from_params(&params, Some(&config)).to_text();
    write_atomic(&a.out, |w| Ok(w.write_all(text.as_bytes())?))?;
    match last {
        Some(loss) => println!("final epoch loss {loss:.6}"),
        None => println!("no epochs run"),
    }
    println!("wall time {elapsed:.2}s");
    println!("wrote model to {}", a.out.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelParams, CliError> {
    Ok(ModelFile::load(path)?.to_params()?)
}

fn inference_grid(params: &ModelParams, epsilon: Option<f64>) -> Result<TimeGrid, CliError> {
    Ok(TimeGrid::new(params.t_max, epsilon.unwrap_or(params.epsilon_train))?)
}

fn check_dims(params: &ModelParams, data: &Dataset) -> Result<(), CliError> {
    if params.feature_dim != data.feature_dim() {
        return Err(ModelError::FeatureDim {
            expected: params.feature_dim,
            got: data.feature_dim(),
        }
        .into());
    }
    Ok(())
}

pub fn write_curves(curves: &[SurvivalCurve], grid: &TimeGrid, w: &mut dyn Write) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    let header = std::iter::once("id".to_string()).chain(grid.points().map(|t| format!("S@{t}")));
    out.write_record(header)?;
    for (id, c) in curves.iter().enumerate() {
        let row = std::iter::once(id.to_string()).chain(c.values().iter().map(f64::to_string));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    let params = load_model(&a.model)?;
    let data = load_csv(&a.data)?;
    check_dims(&params, &data)?;
    let grid = inference_grid(&params, a.epsilon_infer)?;
    let curves = params.survival_curves(&data, &grid)?;
    write_atomic(&a.out, |w| write_curves(&curves, &grid, w))?;
    println!(
        "wrote {} curves over {} grid points to {}",
        curves.len(),
        grid.intervals() + 1,
        a.out.display()
    );
    Ok(())
}

fn format_ci(r: &CiReport) -> String {
    r.value.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let params = load_model(&a.model)?;
    let data = load_csv(&a.data)?;
    check_dims(&params, &data)?;
    let grid = inference_grid(&params, a.epsilon_infer)?;
    let curves = params.survival_curves(&data, &grid)?;
    let wanted: &[(CiVariant, &str)] = match a.metric {
        Metric::Literal => &[(CiVariant::Literal, "literal")],
        Metric::Antolini => &[(CiVariant::Antolini, "antolini")],
        Metric::Both => &[(CiVariant::Literal, "literal"), (CiVariant::Antolini, "antolini")],
    };
    let mut reports = Vec::new();
    for &(variant, name) in wanted {
        let r = concordance(&curves, &data, variant)?;
        reports.push((name, r));
    }
    let first = reports[0].1;
    if first.is_undefined() {
        eprintln!("warning: no comparable pairs; concordance is undefined");
        println!("ci=undefined pairs=0");
        return Ok(());
    }
    for (name, r) in &reports {
        println!(
            "{name} CI {} over {} comparable pairs ({} tied predictions){}",
            format_ci(r),
            r.comparable_pairs,
            r.tied_predictions,
            if r.subsampled { ", subsampled" } else { "" }
        );
    }
    let fields: Vec<String> = reports.iter().map(|(name, r)| format!("ci_{name}={}", format_ci(r))).collect();
    println!("{} pairs={}", fields.join(" "), first.comparable_pairs);
    Ok(())
}

fn score(params: &ModelParams, data: &Dataset, epsilon: f64, variant: CiVariant) -> Result<CiReport, CliError> {
    let grid = TimeGrid::new(params.t_max, epsilon)?;
    Ok(concordance(&params.survival_curves(data, &grid)?, data, variant)?)
}

fn cmd_ablate_epsilon(a: &AblateArgs) -> Result<(), CliError> {
    if a.train_eps.is_empty() || a.infer_eps.is_empty() {
        return Err(CliError::Usage("train-eps and infer-eps must be non-empty".into()));
    }
    let data = load_csv(&a.data)?;
    let (train_set, test_set) = split(&data, a.test_fraction, a.train.seed)?;
    let variant = CiVariant::from(a.metric);
    let mut table = Vec::with_capacity(a.train_eps.len());
    for &eps in &a.train_eps {
        let (params, _) = fit(&train_set, &a.train.config_at(eps), a.train.verbose)?;
        let row = a
            .infer_eps
            .iter()
            .map(|&e| Ok(score(&params, &test_set, e, variant)?.value))
            .collect::<Result<Vec<_>, CliError>>()?;
        table.push(row);
    }
    let render = |w: &mut dyn Write| -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        let header = std::iter::once("train_eps".to_string()).chain(a.infer_eps.iter().map(|e| format!("infer_{e}")));
        out.write_record(header)?;
        for (eps, row) in a.train_eps.iter().zip(&table) {
            let cells = row.iter().map(|v| v.map_or_else(|| "undefined".into(), |v| format!("{v:.6}")));
            out.write_record(std::iter::once(eps.to_string()).chain(cells))?;
        }
        out.flush()?;
        Ok(())
    };
    match &a.out {
        Some(path) => write_atomic(path, render),
        None => render(&mut io::stdout().lock()),
    }
}

fn cmd_cv(a: &CvArgs) -> Result<(), CliError> {
    let data = load_csv(&a.data)?;
    let folds = k_fold(&data, a.folds, a.train.seed)?;
    let config = a.train.config();
    let variant = CiVariant::from(a.metric);
    let mut pooled: Vec<Option<SurvivalCurve>> = vec![None; data.len()];
    let mut values = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let (params, _) = fit(&fold.train, &config, a.train.verbose)?;
        let grid = inference_grid(&params, a.epsilon_infer)?;
        let curves = params.survival_curves(&fold.test, &grid)?;
        let r = concordance(&curves, &fold.test, variant)?;
        println!("fold {} CI {} pairs={}", f + 1, format_ci(&r), r.comparable_pairs);
        values.extend(r.value);
        for (&i, c) in fold.test_indices.iter().zip(curves) {
            pooled[i] = Some(c);
        }
    }
    if !values.is_empty() {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        println!("mean CI {mean:.6} over {} folds", values.len());
    }
    let pooled: Vec<SurvivalCurve> = pooled
        .into_iter()
        .map(|c| c.ok_or_else(|| CliError::Usage("folds do not cover every row".into())))
        .collect::<Result<_, _>>()?;
    let r = concordance(&pooled, &data, variant)?;
    println!("pooled CI {} pairs={}", format_ci(&r), r.comparable_pairs);
    Ok(())
}
