//! Fixed sinusoidal embedding of time.
//!
//! Component `2i` is `sin(t / 10000^(2i/d))` and component `2i+1` the matching
//! cosine. Time goes in raw dataset units.

use thiserror::Error;

use crate::math::Tensor;
use crate::time_grid::TimeGrid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("embedding dimension must be even and >= 2, got {0}")]
    BadDimension(usize),
    #[error("time must be finite and >= 0, got {0}")]
    BadTime(f64),
}

const BASE: f64 = 10_000.0;

pub fn check_dimension(d: usize) -> Result<(), EncodingError> {
    if d < 2 || !d.is_multiple_of(2) {
        return Err(EncodingError::BadDimension(d));
    }
    Ok(())
}

/// Sinusoidal embedding of `t` into `d` components.
pub fn encode(t: f64, d: usize) -> Result<Vec<f64>, EncodingError> {
    check_dimension(d)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(EncodingError::BadTime(t));
    }
    let mut out = vec![0.0; d];
    encode_into(t, &mut out);
    Ok(out)
}

fn encode_into(t: f64, out: &mut [f64]) {
    let d = out.len() as f64;
    for (i, pair) in out.chunks_exact_mut(2).enumerate() {
        let angle = t / BASE.powf(2.0 * i as f64 / d);
        pair[0] = angle.sin();
        pair[1] = angle.cos();
    }
}

/// Embeddings of a grid's Simpson nodes, one row per node.
///
/// These depend only on the grid and the dimension, so one table serves
/// every sample evaluated on that grid.
#[derive(Debug, Clone)]
pub struct NodeEmbeddings {
    grid: TimeGrid,
    table: Tensor,
}

impl NodeEmbeddings {
    pub fn new(grid: TimeGrid, d: usize) -> Result<Self, EncodingError> {
        check_dimension(d)?;
        let nodes = grid.simpson_nodes();
        let mut data = vec![0.0; nodes.len() * d];
        for (row, &t) in data.chunks_exact_mut(d).zip(&nodes) {
            encode_into(t, row);
        }
        let table = Tensor::matrix(nodes.len(), d, data).expect("table dimensions are consistent");
        Ok(Self { grid, table })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dimension(&self) -> usize {
        self.table.shape()[1]
    }

    /// `(2K+1) × d` table.
    pub fn table(&self) -> &Tensor {
        &self.table
    }
}
