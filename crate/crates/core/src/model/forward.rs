use crate::data::Sample;
use crate::encoding::NodeEmbeddings;
use crate::math::{Graph, NodeId, Tensor};
use crate::time_grid::TimeGrid;

use super::{ModelError, ModelParams, HAZARD_CLAMP};

/// Masked likelihoods below this are raised to it before taking the log.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Upper bound on elements in the widest per-(sample, node) activation of a
/// single graph; larger batches are split into row chunks.
const CHUNK_ELEMENTS: usize = 1 << 20;

pub(super) struct ParamNodes {
    encoder: Vec<(NodeId, NodeId)>,
    head: Vec<(NodeId, NodeId)>,
}

impl ParamNodes {
    fn ordered(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.encoder.iter().chain(&self.head).flat_map(|&(w, b)| [w, b])
    }
}

pub(super) struct CurveNodes {
    /// `n × (K+1)` survival values with both endpoints imposed.
    pub survival: NodeId,
    /// `n × K` interval masses.
    pub masses: NodeId,
}

/// Loss (and optionally gradients) accumulated over a set of samples.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Mean per-sample loss.
    pub loss: f64,
    /// Gradient of `loss`, in [`ModelParams::tensors`] order.
    pub grads: Option<Vec<Tensor>>,
    /// Samples whose masked likelihood hit [`LOSS_FLOOR`].
    pub floored: usize,
}

impl ModelParams {
    pub(super) fn register(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        let mut leaf = |t: &Tensor| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        let encoder = self.encoder.iter().map(|l| (leaf(&l.weights), leaf(&l.bias))).collect();
        let head = self.head.iter().map(|l| (leaf(&l.weights), leaf(&l.bias))).collect();
        ParamNodes { encoder, head }
    }

    fn activate(&self, g: &mut Graph, x: NodeId) -> NodeId {
        match self.architecture.activation {
            super::Activation::Relu => g.relu(x),
            super::Activation::Sigmoid => g.sigmoid(x),
        }
    }

    /// Survival curves and interval masses for `n` normalized covariate rows.
    ///
    /// The head's first layer is linear in `z + PE(t)`, so it is applied to
    /// the `n` feature rows and the `2K+1` node embeddings separately and the
    /// results paired up with an outer sum. This is the same function as
    /// evaluating `H` on every `(sample, node)` pair.
    pub(super) fn build_curves(
        &self,
        g: &mut Graph,
        p: &ParamNodes,
        xs: Tensor,
        emb: &NodeEmbeddings,
    ) -> Result<CurveNodes, ModelError> {
        let grid = emb.grid();
        let n = xs.shape()[0];
        let nodes = emb.table().shape()[0];

        let mut h = g.constant(xs);
        let last = p.encoder.len() - 1;
        for (i, &(w, b)) in p.encoder.iter().enumerate() {
            h = g.affine(w, Some(b), h)?;
            if i < last {
                h = self.activate(g, h);
            }
        }

        let (w1, b1) = p.head[0];
        let from_features = g.affine(w1, Some(b1), h)?;
        let pe = g.constant(emb.table().clone());
        let from_time = g.affine(w1, None, pe)?;
        let mut u = g.outer_add(from_features, from_time)?;
        for &(w, b) in &p.head[1..] {
            u = self.activate(g, u);
            u = g.affine(w, Some(b), u)?;
        }

        let hazard = g.sigmoid(u);
        let hazard = g.clamp(hazard, HAZARD_CLAMP, 1.0 - HAZARD_CLAMP);
        let hazard = g.reshape(hazard, &[n, nodes])?;
        let survivor = g.neg(hazard);
        let survivor = g.add_scalar(survivor, 1.0);
        let log_survivor = g.log(survivor)?;
        let log_s = g.cumulative_simpson(log_survivor, grid.epsilon())?;
        let s = g.exp(log_s);
        let s = g.force_column(s, 0, 1.0)?;
        let survival = g.force_column(s, grid.intervals(), 0.0)?;
        let masses = g.adjacent_diff(survival)?;
        Ok(CurveNodes { survival, masses })
    }

    pub(super) fn normalized_rows<'a>(
        &self,
        rows: impl ExactSizeIterator<Item = &'a [f64]>,
    ) -> Result<Tensor, ModelError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * self.feature_dim);
        for x in rows {
            self.check_features(x)?;
            data.extend(self.norm.apply_to(x));
        }
        Ok(Tensor::matrix(n, self.feature_dim, data)?)
    }

    /// Rows per graph so the `(rows · (2K+1)) × width` activations stay bounded.
    pub(super) fn chunk_rows(&self, grid: &TimeGrid) -> usize {
        let nodes = 2 * grid.intervals() + 1;
        let width = self.head.iter().map(|l| l.fan_out()).max().unwrap_or(1);
        (CHUNK_ELEMENTS / (nodes * width)).max(1)
    }

    fn chunk_loss(
        &self,
        samples: &[&Sample],
        emb: &NodeEmbeddings,
        scale: f64,
        with_grad: bool,
    ) -> Result<(f64, Option<Vec<Tensor>>, usize), ModelError> {
        let grid = emb.grid();
        let mut g = Graph::new();
        let p = self.register(&mut g, with_grad);
        let xs = self.normalized_rows(samples.iter().map(|s| s.covariates.as_slice()))?;
        let curves = self.build_curves(&mut g, &p, xs, emb)?;

        let k = grid.intervals();
        let mut mask = Vec::with_capacity(samples.len() * k);
        for s in samples {
            mask.extend(grid.indicator(s.time, s.censored)?.weights());
        }
        let mask = g.constant(Tensor::matrix(samples.len(), k, mask)?);
        let masked = g.mul(curves.masses, mask)?;
        let likelihood = g.row_sum(masked)?;
        let floored = g.value(likelihood).data().iter().filter(|&&v| v < LOSS_FLOOR).count();
        let likelihood = g.clamp(likelihood, LOSS_FLOOR, f64::INFINITY);
        let log_lik = g.log(likelihood)?;
        let total = g.sum(log_lik);
        let loss = g.scale(total, -scale);
        let value = g.value(loss).item().expect("scalar loss");

        let grads = if with_grad {
            g.backward(loss)?;
            Some(
                p.ordered()
                    .map(|id| g.grad(id).expect("trainable leaves carry gradients").clone())
                    .collect(),
            )
        } else {
            None
        };
        Ok((value, grads, floored))
    }

    /// Mean masked negative log-likelihood over `samples`, with gradients when
    /// `with_grad` is set. Row chunks are reduced in a fixed order.
    pub fn batch_loss(
        &self,
        samples: &[&Sample],
        grid: &TimeGrid,
        with_grad: bool,
    ) -> Result<BatchOutput, ModelError> {
        let emb = NodeEmbeddings::new(*grid, self.embed_dim())?;
        self.batch_loss_with(samples, &emb, with_grad)
    }

    pub(crate) fn batch_loss_with(
        &self,
        samples: &[&Sample],
        emb: &NodeEmbeddings,
        with_grad: bool,
    ) -> Result<BatchOutput, ModelError> {
        if samples.is_empty() {
            return Err(crate::data::DataError::Empty.into());
        }
        let scale = 1.0 / samples.len() as f64;
        let mut loss = 0.0;
        let mut floored = 0;
        let mut grads: Option<Vec<Tensor>> = None;
        for chunk in samples.chunks(self.chunk_rows(emb.grid())) {
            let (l, g, f) = self.chunk_loss(chunk, emb, scale, with_grad)?;
            loss += l;
            floored += f;
            if let Some(g) = g {
                match &mut grads {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| a.add_assign(d)),
                    None => grads = Some(g),
                }
            }
        }
        Ok(BatchOutput { loss, grads, floored })
    }

    /// Loss of a single observation: `−ln Σ_j mask_j · p̂_j`.
    pub fn loss(&self, x: &[f64], t_obs: f64, censored: bool, grid: &TimeGrid) -> Result<f64, ModelError> {
        let sample = Sample::new(x.to_vec(), t_obs, censored);
        Ok(self.batch_loss(&[&sample], grid, false)?.loss)
    }

    pub fn mean_loss(&self, dataset: &crate::data::Dataset, grid: &TimeGrid) -> Result<f64, ModelError> {
        let refs: Vec<&Sample> = dataset.samples().iter().collect();
        Ok(self.batch_loss(&refs, grid, false)?.loss)
    }
}
