//! Uniform discrete time space and the per-sample likelihood masks built on it.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("t_max must be finite and > 0, got {0}")]
    BadHorizon(f64),
    #[error("epsilon must be finite, > 0 and <= t_max, got {epsilon} (t_max = {t_max})")]
    BadSpacing { epsilon: f64, t_max: f64 },
    #[error("time {time} lies outside the grid [0, {end}]")]
    OutOfRange { time: f64, end: f64 },
}

/// Relative slack used when a ratio of times should be an integer but
/// floating-point division lands a hair off (e.g. `0.3 / 0.1`).
const SNAP_TOLERANCE: f64 = 1e-9;

fn snapped_ceil(ratio: f64) -> f64 {
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= SNAP_TOLERANCE * nearest.abs().max(1.0) {
        nearest
    } else {
        ratio.ceil()
    }
}

/// Points `t_i = i·ε` for `i = 0..=K`, `K = ceil(t_max / ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    epsilon: f64,
    t_max: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, epsilon: f64) -> Result<Self, GridError> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(GridError::BadHorizon(t_max));
        }
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= t_max) {
            return Err(GridError::BadSpacing { epsilon, t_max });
        }
        let intervals = (snapped_ceil(t_max / epsilon) as usize).max(1);
        Ok(Self {
            epsilon,
            t_max,
            intervals,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Number of intervals `K`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.epsilon
    }

    /// Last grid point `t_K ≥ t_max`.
    pub fn end(&self) -> f64 {
        self.point(self.intervals)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(|i| self.point(i))
    }

    /// Simpson nodes `t_0, t_0+ε/2, t_1, …, t_K` (`2K+1` of them).
    pub fn simpson_nodes(&self) -> Vec<f64> {
        let half = self.epsilon / 2.0;
        (0..=2 * self.intervals).map(|q| q as f64 * half).collect()
    }

    /// Index `i` of the right-closed interval `(t_i, t_{i+1}]` containing `t`.
    /// Time zero belongs to the first interval.
    pub fn interval_index(&self, t: f64) -> Result<usize, GridError> {
        let end = self.end();
        let slack = SNAP_TOLERANCE * end;
        if !(t.is_finite() && t >= 0.0 && t <= end + slack) {
            return Err(GridError::OutOfRange { time: t, end });
        }
        let upper = snapped_ceil(t / self.epsilon) as usize;
        Ok(upper.saturating_sub(1).min(self.intervals - 1))
    }

    pub fn indicator(&self, t: f64, censored: bool) -> Result<IndicatorMask, GridError> {
        let observed_index = self.interval_index(t)?;
        Ok(IndicatorMask {
            intervals: self.intervals,
            observed_index,
            censored,
        })
    }
}

/// Which interval masses enter a sample's likelihood: the observed interval
/// alone for an event, or every interval from it onward for a censored sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndicatorMask {
    intervals: usize,
    observed_index: usize,
    censored: bool,
}

impl IndicatorMask {
    pub fn observed_index(&self) -> usize {
        self.observed_index
    }

    pub fn censored(&self) -> bool {
        self.censored
    }

    pub fn len(&self) -> usize {
        self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals == 0
    }

    pub fn is_set(&self, j: usize) -> bool {
        if self.censored {
            j >= self.observed_index && j < self.intervals
        } else {
            j == self.observed_index
        }
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.intervals).map(|j| self.is_set(j)).collect()
    }

    /// Mask as 0/1 floats, ready to multiply against interval masses.
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.intervals).map(|j| if self.is_set(j) { 1.0 } else { 0.0 })
    }
}
