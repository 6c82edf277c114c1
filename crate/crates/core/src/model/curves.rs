use crate::data::Dataset;
use crate::encoding::NodeEmbeddings;
use crate::math::Graph;
use crate::time_grid::TimeGrid;

use super::{ModelError, ModelParams};

/// `Ŝ` at every grid point, with `Ŝ(t_0) = 1` and `Ŝ(t_K) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    grid: TimeGrid,
    s_values: Vec<f64>,
}

impl SurvivalCurve {
    /// Validates length, endpoints, range and monotonicity.
    pub fn new(grid: TimeGrid, s_values: Vec<f64>) -> Result<Self, ModelError> {
        let k = grid.intervals();
        if s_values.len() != k + 1 {
            return Err(ModelError::Curve(format!("{} values for {} grid points", s_values.len(), k + 1)));
        }
        if s_values[0] != 1.0 || s_values[k] != 0.0 {
            return Err(ModelError::Curve(format!(
                "endpoints must be exactly 1 and 0, got {} and {}",
                s_values[0], s_values[k]
            )));
        }
        if let Some(i) = s_values.windows(2).position(|w| !(w[1] <= w[0]) || !(0.0..=1.0).contains(&w[1])) {
            return Err(ModelError::Curve(format!("value {} at point {} breaks monotonicity", s_values[i + 1], i + 1)));
        }
        Ok(Self { grid, s_values })
    }

    /// Imposes the endpoints on raw survival values at the grid points
    /// (e.g. a closed-form survival function).
    pub fn from_raw(grid: TimeGrid, mut raw: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(first) = raw.first_mut() {
            *first = 1.0;
        }
        if let Some(last) = raw.last_mut() {
            *last = 0.0;
        }
        Self::new(grid, raw)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.s_values
    }

    /// `Ŝ` at an arbitrary time, read at the right endpoint of the interval
    /// containing `t` (`Ŝ(0) = 1`).
    pub fn survival_at(&self, t: f64) -> Result<f64, ModelError> {
        if t == 0.0 {
            return Ok(1.0);
        }
        let i = self.grid.interval_index(t)?;
        Ok(self.s_values[i + 1])
    }

    /// `Ŵ(t) = 1 − Ŝ(t)` under the same lookup rule.
    pub fn cdf_at(&self, t: f64) -> Result<f64, ModelError> {
        Ok(1.0 - self.survival_at(t)?)
    }

    pub fn masses(&self) -> IntervalMasses {
        IntervalMasses {
            grid: self.grid,
            p_values: self.s_values.windows(2).map(|w| w[0] - w[1]).collect(),
        }
    }
}

/// `p̂_i = Ŝ(t_i) − Ŝ(t_{i+1})` for each interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMasses {
    grid: TimeGrid,
    p_values: Vec<f64>,
}

impl IntervalMasses {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.p_values
    }

    pub fn total(&self) -> f64 {
        self.p_values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub curve: SurvivalCurve,
    pub masses: IntervalMasses,
}

impl ModelParams {
    /// Curves for many covariate rows on any grid, independent of the grid
    /// the model was trained on.
    pub fn predict_batch(&self, rows: &[&[f64]], grid: &TimeGrid) -> Result<Vec<Prediction>, ModelError> {
        let emb = NodeEmbeddings::new(*grid, self.embed_dim())?;
        let k = grid.intervals();
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(self.chunk_rows(grid)) {
            let mut g = Graph::new();
            let p = self.register(&mut g, false);
            let xs = self.normalized_rows(chunk.iter().copied())?;
            let nodes = self.build_curves(&mut g, &p, xs, &emb)?;
            let s = g.value(nodes.survival).data();
            let pm = g.value(nodes.masses).data();
            for r in 0..chunk.len() {
                out.push(Prediction {
                    curve: SurvivalCurve {
                        grid: *grid,
                        s_values: s[r * (k + 1)..(r + 1) * (k + 1)].to_vec(),
                    },
                    masses: IntervalMasses {
                        grid: *grid,
                        p_values: pm[r * k..(r + 1) * k].to_vec(),
                    },
                });
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64], grid: &TimeGrid) -> Result<Prediction, ModelError> {
        Ok(self.predict_batch(&[x], grid)?.pop().expect("one row in, one prediction out"))
    }

    pub fn survival_curve(&self, x: &[f64], grid: &TimeGrid) -> Result<SurvivalCurve, ModelError> {
        Ok(self.predict(x, grid)?.curve)
    }

    pub fn interval_masses(&self, x: &[f64], grid: &TimeGrid) -> Result<IntervalMasses, ModelError> {
        Ok(self.predict(x, grid)?.masses)
    }

    pub fn survival_curves(&self, dataset: &Dataset, grid: &TimeGrid) -> Result<Vec<SurvivalCurve>, ModelError> {
        let rows: Vec<&[f64]> = dataset.samples().iter().map(|s| s.covariates.as_slice()).collect();
        Ok(self.predict_batch(&rows, grid)?.into_iter().map(|p| p.curve).collect())
    }
}
