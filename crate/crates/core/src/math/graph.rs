//! Define-by-run reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node holding
//! its forward value and the ids of its inputs. Since inputs always precede
//! outputs on the tape, walking it backwards is a reverse topological order.
//!
//! The op set is the one the survival model needs: batched affine maps, the
//! outer-sum that pairs per-sample features with per-time embeddings, the
//! usual elementwise functions, and a handful of structured reductions
//! (cumulative Simpson sums, adjacent differences, row sums).

use super::tensor::{gemm, Tensor};
use super::MathError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: Option<NodeId> },
    OuterAdd { a: NodeId, b: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Neg(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sum(NodeId),
    RowSum(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Reshape(NodeId),
    CumulativeSimpson { x: NodeId, step: f64 },
    ForceColumn { x: NodeId, col: usize },
    AdjacentDiff(NodeId),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Elementwise operation selector for [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Relu,
    Sigmoid,
    Log,
    Exp,
    Neg,
    Add,
    Mul,
    Sum,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of the last backward root with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let value = self.value(x).map(f);
        let rg = self.needs(&[x]);
        self.push(value, op, rg)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), MathError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(MathError::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn matrix_dims(&self, id: NodeId, what: &str) -> Result<(usize, usize), MathError> {
        match self.value(id).shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(MathError::Shape(format!("{what}: expected a matrix, got {s:?}"))),
        }
    }

    /// `x · Wᵀ + b` where `W` is `out×in`. A vector `x` yields a vector; a
    /// matrix `x` (one sample per row) yields one output row per input row.
    pub fn affine(&mut self, w: NodeId, b: Option<NodeId>, x: NodeId) -> Result<NodeId, MathError> {
        let (out, inp) = self.matrix_dims(w, "affine weight")?;
        let xs = self.value(x).shape().to_vec();
        let (rows, x_cols, out_shape) = match xs.as_slice() {
            [n] => (1, *n, vec![out]),
            [r, n] => (*r, *n, vec![*r, out]),
            s => return Err(MathError::Shape(format!("affine input must be rank 1 or 2, got {s:?}"))),
        };
        if x_cols != inp {
            return Err(MathError::Shape(format!(
                "affine: weight has {inp} columns but input has length {x_cols}"
            )));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [out] {
                return Err(MathError::Shape(format!(
                    "affine: bias shape {:?}, expected [{out}]",
                    self.value(b).shape()
                )));
            }
        }
        let mut y = vec![0.0; rows * out];
        gemm(rows, inp, out, self.value(x).data(), false, self.value(w).data(), true, &mut y, false);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in y.chunks_mut(out) {
                for (v, bb) in row.iter_mut().zip(bias) {
                    *v += bb;
                }
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.needs(&deps);
        Ok(self.push(Tensor::new(out_shape, y)?, Op::Affine { x, w, b }, rg))
    }

    /// Pairs every row of `a` (`n×h`) with every row of `b` (`m×h`):
    /// row `s·m + k` of the `(n·m)×h` result is `a[s] + b[k]`.
    pub fn outer_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        let (n, h) = self.matrix_dims(a, "outer_add lhs")?;
        let (m, hb) = self.matrix_dims(b, "outer_add rhs")?;
        if h != hb {
            return Err(MathError::Shape(format!("outer_add: widths {h} vs {hb}")));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * m * h);
        for s in 0..n {
            let ar = &av[s * h..(s + 1) * h];
            for k in 0..m {
                let br = &bv[k * h..(k + 1) * h];
                out.extend(ar.iter().zip(br).map(|(x, y)| x + y));
            }
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![n * m, h], out)?, Op::OuterAdd { a, b }, rg))
    }

    /// Dispatches the named elementwise operation. Binary operations take two
    /// arguments, all others one.
    pub fn elementwise(&mut self, op: Elementwise, args: &[NodeId]) -> Result<NodeId, MathError> {
        let arity = match op {
            Elementwise::Add | Elementwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(MathError::Shape(format!("{op:?} takes {arity} argument(s), got {}", args.len())));
        }
        match op {
            Elementwise::Relu => Ok(self.relu(args[0])),
            Elementwise::Sigmoid => Ok(self.sigmoid(args[0])),
            Elementwise::Log => self.log(args[0]),
            Elementwise::Exp => Ok(self.exp(args[0])),
            Elementwise::Neg => Ok(self.neg(args[0])),
            Elementwise::Add => self.add(args[0], args[1]),
            Elementwise::Mul => self.mul(args[0], args[1]),
            Elementwise::Sum => Ok(self.sum(args[0])),
        }
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId, MathError> {
        if let Some((index, &value)) = self.value(x).data().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(MathError::Domain { index, value });
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.unary(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: NodeId, offset: f64) -> NodeId {
        self.unary(x, |v| v + offset, Op::AddScalar(x))
    }

    /// Hard clip to `[lo, hi]`; the gradient is zero wherever the clip binds.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.same_shape(a, b, "add")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        self.same_shape(a, b, "mul")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    /// `n×c` matrix to length-`n` vector of row sums.
    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId, MathError> {
        let (_, c) = self.matrix_dims(x, "row_sum")?;
        let sums: Vec<f64> = self.value(x).data().chunks(c.max(1)).map(|r| r.iter().sum()).collect();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::vector(sums), Op::RowSum(x), rg))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, MathError> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Row-wise cumulative composite Simpson sums.
    ///
    /// `x` is `n×(2K+1)` holding integrand values at `t_0, t_0+step/2, t_1, …, t_K`.
    /// The `n×(K+1)` result has `y[r][0] = 0` and
    /// `y[r][i+1] = y[r][i] + step/6 · (x[2i] + 4·x[2i+1] + x[2i+2])`.
    pub fn cumulative_simpson(&mut self, x: NodeId, step: f64) -> Result<NodeId, MathError> {
        let (n, nodes) = self.matrix_dims(x, "cumulative_simpson")?;
        if nodes < 3 || nodes % 2 == 0 {
            return Err(MathError::Shape(format!(
                "cumulative_simpson needs an odd node count >= 3, got {nodes}"
            )));
        }
        let k = (nodes - 1) / 2;
        let w = step / 6.0;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * (k + 1));
        for r in 0..n {
            let g = &xv[r * nodes..(r + 1) * nodes];
            let mut acc = 0.0;
            out.push(acc);
            for j in 0..k {
                acc += w * (g[2 * j] + 4.0 * g[2 * j + 1] + g[2 * j + 2]);
                out.push(acc);
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![n, k + 1], out)?, Op::CumulativeSimpson { x, step }, rg))
    }

    /// Overwrites column `col` of a matrix with `value`; no gradient flows
    /// through the overwritten entries.
    pub fn force_column(&mut self, x: NodeId, col: usize, value: f64) -> Result<NodeId, MathError> {
        let (_, c) = self.matrix_dims(x, "force_column")?;
        if col >= c {
            return Err(MathError::Shape(format!("force_column: column {col} of {c}")));
        }
        let mut v = self.value(x).clone();
        for row in v.data_mut().chunks_mut(c) {
            row[col] = value;
        }
        let rg = self.needs(&[x]);
        Ok(self.push(v, Op::ForceColumn { x, col }, rg))
    }

    /// `n×c` to `n×(c−1)` with `y[r][i] = x[r][i] − x[r][i+1]`.
    pub fn adjacent_diff(&mut self, x: NodeId) -> Result<NodeId, MathError> {
        let (n, c) = self.matrix_dims(x, "adjacent_diff")?;
        if c < 2 {
            return Err(MathError::Shape(format!("adjacent_diff needs >= 2 columns, got {c}")));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * (c - 1));
        for row in xv.chunks(c) {
            out.extend(row.windows(2).map(|w| w[0] - w[1]));
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![n, c - 1], out)?, Op::AdjacentDiff(x), rg))
    }

    /// Reverse pass from a single-element `root`. All accumulators are reset
    /// first, so the graph can be differentiated repeatedly.
    pub fn backward(&mut self, root: NodeId) -> Result<(), MathError> {
        if self.value(root).len() != 1 {
            return Err(MathError::NonScalarRoot(self.value(root).shape().to_vec()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let root_shape = self.value(root).shape().to_vec();
        self.nodes[root.0].grad = Some(Tensor::filled(&root_shape, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(upstream) = self.nodes[idx].grad.take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &upstream)?;
            self.nodes[idx].grad = Some(upstream);
        }
        // Only trainable leaves report gradients; intermediates are scratch.
        for node in &mut self.nodes {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                node.grad = None;
            }
        }
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.requires_grad && node.grad.is_none() {
                node.grad = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(delta),
        }
    }

    fn accumulate_with(&mut self, id: NodeId, f: impl FnOnce(&Tensor) -> Tensor) {
        if self.nodes[id.0].requires_grad {
            let delta = f(&self.nodes[id.0].value);
            self.accumulate(id, delta);
        }
    }

    fn propagate(&mut self, idx: usize, op: &Op, dy: &Tensor) -> Result<(), MathError> {
        match *op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (out, inp) = self.matrix_dims(w, "affine weight")?;
                let rows = dy.len() / out;
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![0.0; rows * inp];
                    gemm(rows, out, inp, dy.data(), false, self.value(w).data(), false, &mut dx, false);
                    let shape = self.value(x).shape().to_vec();
                    self.accumulate(x, Tensor::new(shape, dx)?);
                }
                if self.nodes[w.0].requires_grad {
                    let mut dw = vec![0.0; out * inp];
                    gemm(out, rows, inp, dy.data(), true, self.value(x).data(), false, &mut dw, false);
                    self.accumulate(w, Tensor::new(vec![out, inp], dw)?);
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; out];
                    for row in dy.data().chunks(out) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.accumulate(b, Tensor::vector(db));
                }
            }
            Op::OuterAdd { a, b } => {
                let (n, h) = self.matrix_dims(a, "outer_add lhs")?;
                let (m, _) = self.matrix_dims(b, "outer_add rhs")?;
                let mut da = vec![0.0; n * h];
                let mut db = vec![0.0; m * h];
                for s in 0..n {
                    for k in 0..m {
                        let row = &dy.data()[(s * m + k) * h..(s * m + k + 1) * h];
                        for ((ga, gb), v) in da[s * h..(s + 1) * h].iter_mut().zip(&mut db[k * h..(k + 1) * h]).zip(row) {
                            *ga += v;
                            *gb += v;
                        }
                    }
                }
                self.accumulate(a, Tensor::new(vec![n, h], da)?);
                self.accumulate(b, Tensor::new(vec![m, h], db)?);
            }
            Op::Relu(x) => {
                self.accumulate_with(x, |xv| zip_map(xv, dy, |v, g| if v > 0.0 { g } else { 0.0 }));
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[idx].value.clone();
                self.accumulate(x, zip_map(&y, dy, |s, g| g * s * (1.0 - s)));
            }
            Op::Log(x) => {
                self.accumulate_with(x, |xv| zip_map(xv, dy, |v, g| g / v));
            }
            Op::Exp(x) => {
                let y = self.nodes[idx].value.clone();
                self.accumulate(x, zip_map(&y, dy, |e, g| g * e));
            }
            Op::Neg(x) => self.accumulate(x, dy.map(|g| -g)),
            Op::Scale(x, f) => self.accumulate(x, dy.map(|g| g * f)),
            Op::AddScalar(x) | Op::Reshape(x) => {
                let shape = self.value(x).shape().to_vec();
                self.accumulate(x, dy.reshape(&shape)?);
            }
            Op::Clamp { x, lo, hi } => {
                self.accumulate_with(x, |xv| zip_map(xv, dy, |v, g| if v >= lo && v <= hi { g } else { 0.0 }));
            }
            Op::Add(a, b) => {
                self.accumulate(a, dy.clone());
                self.accumulate(b, dy.clone());
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let d = zip_map(self.value(b), dy, |v, g| v * g);
                    self.accumulate(a, d);
                }
                if self.nodes[b.0].requires_grad {
                    let d = zip_map(self.value(a), dy, |v, g| v * g);
                    self.accumulate(b, d);
                }
            }
            Op::Sum(x) => {
                let g = dy.data()[0];
                self.accumulate_with(x, |xv| Tensor::filled(xv.shape(), g));
            }
            Op::RowSum(x) => {
                let (n, c) = self.matrix_dims(x, "row_sum")?;
                let mut d = Vec::with_capacity(n * c);
                for &g in dy.data() {
                    d.extend(std::iter::repeat_n(g, c));
                }
                self.accumulate(x, Tensor::new(vec![n, c], d)?);
            }
            Op::CumulativeSimpson { x, step } => {
                let (n, nodes) = self.matrix_dims(x, "cumulative_simpson")?;
                let k = (nodes - 1) / 2;
                let w = step / 6.0;
                let mut dx = vec![0.0; n * nodes];
                for r in 0..n {
                    let dyr = &dy.data()[r * (k + 1)..(r + 1) * (k + 1)];
                    let dxr = &mut dx[r * nodes..(r + 1) * nodes];
                    // Interval j feeds every prefix i >= j+1.
                    let mut suffix = 0.0;
                    for j in (0..k).rev() {
                        suffix += dyr[j + 1];
                        dxr[2 * j] += w * suffix;
                        dxr[2 * j + 1] += 4.0 * w * suffix;
                        dxr[2 * j + 2] += w * suffix;
                    }
                }
                self.accumulate(x, Tensor::new(vec![n, nodes], dx)?);
            }
            Op::ForceColumn { x, col } => {
                let (_, c) = self.matrix_dims(x, "force_column")?;
                let mut d = dy.clone();
                for row in d.data_mut().chunks_mut(c) {
                    row[col] = 0.0;
                }
                self.accumulate(x, d);
            }
            Op::AdjacentDiff(x) => {
                let (n, c) = self.matrix_dims(x, "adjacent_diff")?;
                let mut d = vec![0.0; n * c];
                for r in 0..n {
                    let dyr = &dy.data()[r * (c - 1)..(r + 1) * (c - 1)];
                    let dr = &mut d[r * c..(r + 1) * c];
                    for (i, g) in dyr.iter().enumerate() {
                        dr[i] += g;
                        dr[i + 1] -= g;
                    }
                }
                self.accumulate(x, Tensor::new(vec![n, c], d)?);
            }
        }
        Ok(())
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map preserves shape")
}
