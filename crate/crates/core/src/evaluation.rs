//! Time-dependent concordance under right-censoring.
//!
//! A pair `(i, j)` is comparable when `t_i < t_j` and sample `i` had an
//! observed event. Two verdict rules are offered:
//!
//! * [`CiVariant::Literal`] compares each sample's predicted CDF at its own
//!   observed time, `Ŵ(t_i | x_i) > Ŵ(t_j | x_j)`.
//! * [`CiVariant::Antolini`] compares both CDFs at the earlier time,
//!   `Ŵ(t_i | x_i) > Ŵ(t_i | x_j)`.
//!
//! Equal predictions count one half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, SynthOracle};
use crate::model::{ModelError, ModelParams, SurvivalCurve};
use crate::time_grid::TimeGrid;

/// Datasets up to this size are scored over every pair.
pub const EXACT_PAIR_LIMIT: usize = 100_000;
/// Ordered pairs drawn when a dataset exceeds [`EXACT_PAIR_LIMIT`].
pub const SUBSAMPLED_PAIRS: usize = 10_000_000;
const SUBSAMPLE_SEED: u64 = 0x5eed_c1d3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiVariant {
    Literal,
    Antolini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairVerdict {
    pub index_i: usize,
    pub index_j: usize,
    pub comparable: bool,
    pub concordant: bool,
    pub tied_prediction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiReport {
    /// `None` when no pair is comparable.
    pub value: Option<f64>,
    pub comparable_pairs: usize,
    pub tied_predictions: usize,
    pub subsampled: bool,
}

impl CiReport {
    pub fn is_undefined(&self) -> bool {
        self.value.is_none()
    }
}

pub fn is_comparable(dataset: &Dataset, i: usize, j: usize) -> bool {
    let (a, b) = (&dataset.samples()[i], &dataset.samples()[j]);
    !a.censored && a.time < b.time
}

/// Every ordered comparable pair `(i, j)`.
pub fn comparable_pairs(dataset: &Dataset) -> Vec<(usize, usize)> {
    let n = dataset.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        if dataset.samples()[i].censored {
            continue;
        }
        for j in 0..n {
            if is_comparable(dataset, i, j) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Anything that yields one survival curve per sample of a dataset.
pub trait CurvePredictor {
    fn predict_curves(&self, dataset: &Dataset, grid: &TimeGrid) -> Result<Vec<SurvivalCurve>, ModelError>;
}

impl CurvePredictor for ModelParams {
    fn predict_curves(&self, dataset: &Dataset, grid: &TimeGrid) -> Result<Vec<SurvivalCurve>, ModelError> {
        self.survival_curves(dataset, grid)
    }
}

/// The generating survival functions, valid only for the dataset they came with.
impl CurvePredictor for SynthOracle {
    fn predict_curves(&self, dataset: &Dataset, grid: &TimeGrid) -> Result<Vec<SurvivalCurve>, ModelError> {
        if dataset.len() != self.rates.len() {
            return Err(ModelError::Curve(format!(
                "oracle covers {} samples, dataset has {}",
                self.rates.len(),
                dataset.len()
            )));
        }
        (0..dataset.len())
            .map(|i| SurvivalCurve::from_raw(*grid, grid.points().map(|t| self.survival(i, t)).collect()))
            .collect()
    }
}

fn verdict_from(a: f64, b: f64) -> (bool, bool) {
    (a > b, a == b)
}

/// Shared pair loop. `score(i, j)` returns the two predictions to compare
/// for a comparable pair; the pair is concordant when the first is larger.
fn tally(dataset: &Dataset, mut score: impl FnMut(usize, usize) -> (f64, f64)) -> CiReport {
    let n = dataset.len();
    let mut pairs = 0usize;
    let mut concordant = 0usize;
    let mut ties = 0usize;
    let mut visit = |i: usize, j: usize| {
        if is_comparable(dataset, i, j) {
            pairs += 1;
            let (a, b) = score(i, j);
            let (c, t) = verdict_from(a, b);
            concordant += usize::from(c);
            ties += usize::from(t);
        }
    };
    let subsampled = n > EXACT_PAIR_LIMIT;
    if subsampled {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        for _ in 0..SUBSAMPLED_PAIRS {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            visit(i, j);
        }
    } else {
        for i in 0..n {
            if dataset.samples()[i].censored {
                continue;
            }
            for j in 0..n {
                visit(i, j);
            }
        }
    }
    CiReport {
        value: (pairs > 0).then(|| (concordant as f64 + 0.5 * ties as f64) / pairs as f64),
        comparable_pairs: pairs,
        tied_predictions: ties,
        subsampled,
    }
}

/// Concordance from a predicted CDF `cdf(sample, time)`.
pub fn concordance_by(dataset: &Dataset, variant: CiVariant, cdf: impl Fn(usize, f64) -> f64) -> CiReport {
    let t = |i: usize| dataset.samples()[i].time;
    match variant {
        CiVariant::Literal => {
            let own: Vec<f64> = (0..dataset.len()).map(|i| cdf(i, t(i))).collect();
            tally(dataset, |i, j| (own[i], own[j]))
        }
        CiVariant::Antolini => tally(dataset, |i, j| (cdf(i, t(i)), cdf(j, t(i)))),
    }
}

/// Concordance of per-sample curves; CDFs are read at the right endpoint of
/// the interval holding each evaluation time.
pub fn concordance(curves: &[SurvivalCurve], dataset: &Dataset, variant: CiVariant) -> Result<CiReport, ModelError> {
    if curves.len() != dataset.len() {
        return Err(ModelError::Curve(format!("{} curves for {} samples", curves.len(), dataset.len())));
    }
    // Validate every evaluation time up front so the closure cannot fail.
    if let Some(first) = curves.first() {
        for s in dataset.samples() {
            first.cdf_at(s.time)?;
        }
        if curves.iter().any(|c| c.grid() != first.grid()) {
            return Err(ModelError::Curve("curves live on different grids".into()));
        }
    }
    Ok(concordance_by(dataset, variant, |j, t| {
        curves[j].cdf_at(t).expect("evaluation times checked against the grid")
    }))
}

/// Per-pair detail behind [`concordance`], for comparable pairs only.
pub fn pair_verdicts(
    curves: &[SurvivalCurve],
    dataset: &Dataset,
    variant: CiVariant,
) -> Result<Vec<PairVerdict>, ModelError> {
    comparable_pairs(dataset)
        .into_iter()
        .map(|(i, j)| {
            let ti = dataset.samples()[i].time;
            let a = curves[i].cdf_at(ti)?;
            let b = match variant {
                CiVariant::Literal => curves[j].cdf_at(dataset.samples()[j].time)?,
                CiVariant::Antolini => curves[j].cdf_at(ti)?,
            };
            let (concordant, tied_prediction) = verdict_from(a, b);
            Ok(PairVerdict {
                index_i: i,
                index_j: j,
                comparable: true,
                concordant,
                tied_prediction,
            })
        })
        .collect()
}

pub fn c_index_literal(model: &impl CurvePredictor, dataset: &Dataset, grid: &TimeGrid) -> Result<CiReport, ModelError> {
    concordance(&model.predict_curves(dataset, grid)?, dataset, CiVariant::Literal)
}

pub fn c_index_antolini(model: &impl CurvePredictor, dataset: &Dataset, grid: &TimeGrid) -> Result<CiReport, ModelError> {
    concordance(&model.predict_curves(dataset, grid)?, dataset, CiVariant::Antolini)
}

/// Harrell-style concordance of a time-invariant risk score (higher = earlier event).
pub fn rank_concordance(dataset: &Dataset, risk: &[f64]) -> CiReport {
    assert_eq!(risk.len(), dataset.len(), "one risk score per sample");
    tally(dataset, |i, j| (risk[i], risk[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_exponential, Sample, SynthSpec};

    fn ds(rows: &[(f64, bool)]) -> Dataset {
        Dataset::new(
            1,
            rows.iter().map(|&(t, c)| Sample::new(vec![0.0], t, c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn comparability_rules() {
        let d = ds(&[(2.0, false), (5.0, true), (2.0, true), (5.0, false), (2.0, false)]);
        assert!(is_comparable(&d, 0, 1));
        assert!(!is_comparable(&d, 2, 3));
        assert!(!is_comparable(&d, 0, 4));
        assert!(!is_comparable(&d, 1, 0));
        assert_eq!(comparable_pairs(&d), vec![(0, 1), (0, 3), (4, 1), (4, 3)]);
    }

    #[test]
    fn perfect_ties_and_undefined() {
        let d = ds(&[(1.0, false), (2.0, false), (3.0, true)]);
        let r = rank_concordance(&d, &[3.0, 2.0, 1.0]);
        assert_eq!(r.value, Some(1.0));
        assert_eq!(r.comparable_pairs, 3);
        let r = rank_concordance(&d, &[1.0, 1.0, 1.0]);
        assert_eq!(r.value, Some(0.5));
        assert_eq!(r.tied_predictions, 3);

        let all_censored = ds(&[(1.0, true), (2.0, true)]);
        assert!(rank_concordance(&all_censored, &[1.0, 2.0]).is_undefined());
    }

    #[test]
    fn identical_curves_tie_under_antolini() {
        let grid = TimeGrid::new(4.0, 1.0).unwrap();
        let d = ds(&[(0.5, false), (1.5, false), (2.5, true), (3.5, false)]);
        let c = SurvivalCurve::new(grid, vec![1.0, 0.7, 0.4, 0.2, 0.0]).unwrap();
        let r = concordance(&vec![c; 4], &d, CiVariant::Antolini).unwrap();
        assert_eq!(r.value, Some(0.5));
    }

    #[test]
    fn antolini_with_true_curves_equals_rank_by_rate_without_censoring() {
        let spec = SynthSpec {
            n: 300,
            covariate_dim: 2,
            weights: vec![0.7, -0.4],
            base_rate: 0.2,
            censor_horizon: 1e9,
            seed: 17,
        };
        let (d, oracle) = synth_exponential(&spec).unwrap();
        let grid = TimeGrid::new(d.max_time() + 2.0, 0.25).unwrap();
        let via_curves = c_index_antolini(&oracle, &d, &grid).unwrap();
        // Distinct rates only give distinct CDFs while 1 − exp(−λt) stays
        // below 1 in floating point.
        assert_eq!(via_curves.tied_predictions, 0);
        let by_rate = rank_concordance(&d, &oracle.rates);
        assert_eq!(via_curves.value, by_rate.value);
        assert_eq!(via_curves.comparable_pairs, by_rate.comparable_pairs);
    }

    #[test]
    fn order_reversal_maps_ci_to_complement() {
        let spec = SynthSpec {
            n: 200,
            covariate_dim: 2,
            weights: vec![0.5, 0.5],
            base_rate: 0.3,
            censor_horizon: 8.0,
            seed: 3,
        };
        let (d, oracle) = synth_exponential(&spec).unwrap();
        let cdf = |j: usize, t: f64| 1.0 - oracle.survival(j, t) + 1e-3 * j as f64;
        for variant in [CiVariant::Literal, CiVariant::Antolini] {
            let a = concordance_by(&d, variant, cdf);
            let b = concordance_by(&d, variant, |j, t| 1.0 - cdf(j, t));
            assert_eq!(a.tied_predictions, 0);
            assert!((a.value.unwrap() + b.value.unwrap() - 1.0).abs() < 1e-12);
            let c = concordance_by(&d, variant, |j, t| (3.0 * cdf(j, t)).exp());
            assert_eq!(a.value, c.value);
        }
    }
}
