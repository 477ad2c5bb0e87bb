//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] records every executed operation in topological order. Tree
//! shapes differ per sentence, so a fresh graph is built for each batch and
//! discarded after the backward pass. Parameters enter a graph through
//! [`Graph::param`], which introduces each one as a single leaf per graph;
//! reusing that leaf for both sentences of a pair is what ties the siamese
//! encoder weights.

use std::collections::HashMap;

use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Handle to the output tensor of one recorded operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(usize);

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply<F: Scalar>(self, graph: &mut Graph<F>, x: VarId) -> VarId {
        match self {
            Activation::Tanh => graph.tanh(x),
            Activation::Relu => graph.relu(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

enum Op<F> {
    Leaf,
    MatVec { m: usize, x: usize },
    Concat { a: usize, b: usize },
    Tanh { x: usize },
    Relu { x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AbsDiff { a: usize, b: usize },
    Scale { x: usize, c: F },
    Softmax { x: usize },
    KlDiv { target: Vec<F>, pred: usize },
    Sum { x: usize },
}

struct Node<F> {
    tensor: Tensor<F>,
    op: Op<F>,
    param: Option<ParamId>,
}

/// Ordered record of executed operations over tensors.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    param_leaves: HashMap<ParamId, VarId>,
    backward_done: bool,
    corrupt_tanh: bool,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_leaves: HashMap::new(),
            backward_done: false,
            corrupt_tanh: false,
        }
    }

    /// Scales the tanh backward rule by 1.01. Negative control for gradient
    /// checking; never set on a training path.
    #[doc(hidden)]
    pub fn corrupt_tanh_backward(&mut self) {
        self.corrupt_tanh = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor<F> {
        &self.nodes[id.0].tensor
    }

    /// Gradient of the recorded tensor, present after `backward` for every
    /// grad-requiring tensor reachable from the loss.
    pub fn grad(&self, id: VarId) -> Option<&[F]> {
        self.nodes[id.0].tensor.grad()
    }

    fn push(&mut self, tensor: Tensor<F>, op: Op<F>, param: Option<ParamId>) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { tensor, op, param });
        id
    }

    /// Record a tensor that takes no gradient (word vectors, one-hots).
    pub fn constant(&mut self, tensor: Tensor<F>) -> VarId {
        self.push(tensor.detached(), Op::Leaf, None)
    }

    /// Record a grad-requiring leaf not backed by a parameter store.
    pub fn variable(&mut self, tensor: Tensor<F>) -> VarId {
        let mut tensor = tensor.with_requires_grad();
        tensor.clear_grad();
        self.push(tensor, Op::Leaf, None)
    }

    /// Introduce a stored parameter as a leaf, once per graph. Repeated calls
    /// with the same id return the same leaf, so every use shares one node
    /// and gradients from all paths accumulate there.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> VarId {
        if let Some(&var) = self.param_leaves.get(&id) {
            return var;
        }
        let mut tensor = store.get(id).clone();
        tensor.clear_grad();
        let var = self.push(tensor, Op::Leaf, Some(id));
        self.param_leaves.insert(id, var);
        var
    }

    /// Matrix-vector product `m · x`.
    pub fn matvec(&mut self, m: VarId, x: VarId) -> Result<VarId> {
        let (rows, cols) = match self.shape_of(m) {
            Shape::Matrix(r, c) => (r, c),
            s => {
                return Err(Error::DimensionMismatch {
                    op: "matvec",
                    lhs: s.to_string(),
                    rhs: "rank-2 operand required".into(),
                })
            }
        };
        let xs = self.shape_of(x);
        if xs != Shape::Vector(cols) {
            return Err(Error::DimensionMismatch {
                op: "matvec",
                lhs: Shape::Matrix(rows, cols).to_string(),
                rhs: xs.to_string(),
            });
        }
        let mv = self.nodes[m.0].tensor.as_slice();
        let xv = self.nodes[x.0].tensor.as_slice();
        let mut out = vec![F::zero(); rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &mv[i * cols..(i + 1) * cols];
            let mut acc = F::zero();
            for (w, v) in row.iter().zip(xv) {
                acc += *w * *v;
            }
            *o = acc;
        }
        Ok(self.record(Tensor::vector(out), Op::MatVec { m: m.0, x: x.0 }))
    }

    /// Concatenation of two rank-1 tensors.
    pub fn concat(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        match (sa, sb) {
            (Shape::Vector(_), Shape::Vector(_)) => {}
            _ => {
                return Err(Error::DimensionMismatch {
                    op: "concat",
                    lhs: sa.to_string(),
                    rhs: sb.to_string(),
                })
            }
        }
        let mut out = self.nodes[a.0].tensor.as_slice().to_vec();
        out.extend_from_slice(self.nodes[b.0].tensor.as_slice());
        Ok(self.record(Tensor::vector(out), Op::Concat { a: a.0, b: b.0 }))
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        let out: Vec<F> = self.nodes[x.0]
            .tensor
            .as_slice()
            .iter()
            .map(|v| v.tanh())
            .collect();
        let shape = self.shape_of(x);
        self.record(reshaped(out, shape), Op::Tanh { x: x.0 })
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let out: Vec<F> = self.nodes[x.0]
            .tensor
            .as_slice()
            .iter()
            .map(|v| if *v > F::zero() { *v } else { F::zero() })
            .collect();
        let shape = self.shape_of(x);
        self.record(reshaped(out, shape), Op::Relu { x: x.0 })
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = self.elementwise_values("add", a, b, |x, y| x + y)?;
        Ok(self.record(out, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = self.elementwise_values("sub", a, b, |x, y| x - y)?;
        Ok(self.record(out, Op::Sub { a: a.0, b: b.0 }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = self.elementwise_values("mul", a, b, |x, y| x * y)?;
        Ok(self.record(out, Op::Mul { a: a.0, b: b.0 }))
    }

    /// Elementwise absolute difference `|a - b|`, subgradient 0 at ties.
    pub fn abs_diff(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = self.elementwise_values("abs_diff", a, b, |x, y| (x - y).abs())?;
        Ok(self.record(out, Op::AbsDiff { a: a.0, b: b.0 }))
    }

    /// Multiplication by a constant outside the graph.
    pub fn scale(&mut self, x: VarId, c: F) -> VarId {
        let out: Vec<F> = self.nodes[x.0]
            .tensor
            .as_slice()
            .iter()
            .map(|v| *v * c)
            .collect();
        let shape = self.shape_of(x);
        self.record(reshaped(out, shape), Op::Scale { x: x.0, c })
    }

    /// Numerically stable softmax over a rank-1 tensor.
    pub fn softmax(&mut self, x: VarId) -> Result<VarId> {
        let shape = self.shape_of(x);
        match shape {
            Shape::Vector(n) if n >= 1 => {}
            _ => {
                return Err(Error::DimensionMismatch {
                    op: "softmax",
                    lhs: shape.to_string(),
                    rhs: "non-empty rank-1 operand required".into(),
                })
            }
        }
        let xs = self.nodes[x.0].tensor.as_slice();
        let max = xs.iter().cloned().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = xs.iter().map(|v| (*v - max).exp()).collect();
        let mut total = F::zero();
        for e in &exps {
            total += *e;
        }
        let out: Vec<F> = exps.iter().map(|e| *e / total).collect();
        Ok(self.record(Tensor::vector(out), Op::Softmax { x: x.0 }))
    }

    /// KL divergence `sum p_i ln(p_i / pred_i)` of a constant target
    /// distribution against a predicted one. No gradient flows into the
    /// target.
    pub fn kl_div(&mut self, target: &[F], pred: VarId) -> Result<VarId> {
        let shape = self.shape_of(pred);
        if shape != Shape::Vector(target.len()) {
            return Err(Error::DimensionMismatch {
                op: "kl_div",
                lhs: format!("[{}]", target.len()),
                rhs: shape.to_string(),
            });
        }
        debug_assert!(
            {
                let mut s = F::zero();
                for &p in target {
                    s += p;
                }
                (s - F::one()).abs() < cast(1e-9)
                    && target.iter().all(|p| *p >= F::zero() && *p <= F::one())
            },
            "target is not a probability distribution"
        );
        let q = self.nodes[pred.0].tensor.as_slice();
        let mut acc = F::zero();
        for (&p, &qi) in target.iter().zip(q) {
            if qi <= F::zero() {
                return Err(Error::Domain(format!(
                    "kl_div: predicted probability {qi} is not positive"
                )));
            }
            if p > F::zero() {
                acc += p * (p / qi).ln();
            }
        }
        Ok(self.record(
            Tensor::scalar(acc),
            Op::KlDiv {
                target: target.to_vec(),
                pred: pred.0,
            },
        ))
    }

    /// Sum of all entries, yielding a one-element tensor.
    pub fn sum(&mut self, x: VarId) -> VarId {
        let mut acc = F::zero();
        for &v in self.nodes[x.0].tensor.as_slice() {
            acc += v;
        }
        self.record(Tensor::scalar(acc), Op::Sum { x: x.0 })
    }

    /// Mean KL divergence over a batch of (target, prediction) pairs.
    pub fn mean_kl(&mut self, pairs: &[(Vec<F>, VarId)]) -> Result<VarId> {
        if pairs.is_empty() {
            return Err(Error::Usage("mean_kl: empty batch".into()));
        }
        let mut total = None;
        for (target, pred) in pairs {
            let term = self.kl_div(target, *pred)?;
            total = Some(match total {
                None => term,
                Some(t) => self.add(t, term)?,
            });
        }
        let total = total.expect("non-empty batch");
        let inv = F::one() / F::from(pairs.len()).expect("batch size fits scalar");
        Ok(self.scale(total, inv))
    }

    /// Run reverse-mode accumulation from a scalar loss. Each grad-requiring
    /// tensor reachable from the loss receives the sum of the gradients from
    /// every path. A second call without rebuilding the graph is an error.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already run on this graph; gradients were not reset".into(),
            ));
        }
        let loss_shape = self.shape_of(loss);
        if loss_shape != Shape::Vector(1) {
            return Err(Error::DimensionMismatch {
                op: "backward",
                lhs: loss_shape.to_string(),
                rhs: "scalar loss required".into(),
            });
        }

        let n = self.nodes.len();
        let mut buffers: Vec<Option<Vec<F>>> = (0..n).map(|_| None).collect();
        if self.nodes[loss.0].tensor.requires_grad() {
            buffers[loss.0] = Some(vec![F::one()]);
        }

        for i in (0..=loss.0).rev() {
            let grad = match buffers[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_backward_rule(i, &grad, &mut buffers);
            self.nodes[i].tensor.set_grad(grad);
        }

        self.backward_done = true;
        Ok(())
    }

    fn apply_backward_rule(&self, i: usize, grad: &[F], buffers: &mut [Option<Vec<F>>]) {
        // Accumulate into an input's buffer, skipping inputs outside the
        // differentiable path.
        macro_rules! accum {
            ($idx:expr, $f:expr) => {{
                let idx = $idx;
                if self.nodes[idx].tensor.requires_grad() {
                    let buf = buffers[idx]
                        .get_or_insert_with(|| vec![F::zero(); self.nodes[idx].tensor.len()]);
                    #[allow(clippy::redundant_closure_call)]
                    ($f)(&mut buf[..]);
                }
            }};
        }

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatVec { m, x } => {
                let (rows, cols) = match self.nodes[*m].tensor.shape() {
                    Shape::Matrix(r, c) => (r, c),
                    _ => unreachable!("matvec operand is rank-2"),
                };
                let mv = self.nodes[*m].tensor.as_slice();
                let xv = self.nodes[*x].tensor.as_slice();
                accum!(*m, |buf: &mut [F]| {
                    for i in 0..rows {
                        for j in 0..cols {
                            buf[i * cols + j] += grad[i] * xv[j];
                        }
                    }
                });
                accum!(*x, |buf: &mut [F]| {
                    for i in 0..rows {
                        for j in 0..cols {
                            buf[j] += mv[i * cols + j] * grad[i];
                        }
                    }
                });
            }
            Op::Concat { a, b } => {
                let split = self.nodes[*a].tensor.len();
                accum!(*a, |buf: &mut [F]| {
                    for (g, d) in buf.iter_mut().zip(&grad[..split]) {
                        *g += *d;
                    }
                });
                accum!(*b, |buf: &mut [F]| {
                    for (g, d) in buf.iter_mut().zip(&grad[split..]) {
                        *g += *d;
                    }
                });
            }
            Op::Tanh { x } => {
                let y = self.nodes[i].tensor.as_slice();
                let fudge = if self.corrupt_tanh {
                    cast(1.01)
                } else {
                    F::one()
                };
                accum!(*x, |buf: &mut [F]| {
                    for ((g, &yi), &gi) in buf.iter_mut().zip(y).zip(grad) {
                        *g += gi * (F::one() - yi * yi) * fudge;
                    }
                });
            }
            Op::Relu { x } => {
                let xv = self.nodes[*x].tensor.as_slice();
                accum!(*x, |buf: &mut [F]| {
                    for ((g, &xi), &gi) in buf.iter_mut().zip(xv).zip(grad) {
                        if xi > F::zero() {
                            *g += gi;
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                accum!(*a, |buf: &mut [F]| {
                    for (g, &d) in buf.iter_mut().zip(grad) {
                        *g += d;
                    }
                });
                accum!(*b, |buf: &mut [F]| {
                    for (g, &d) in buf.iter_mut().zip(grad) {
                        *g += d;
                    }
                });
            }
            Op::Sub { a, b } => {
                accum!(*a, |buf: &mut [F]| {
                    for (g, &d) in buf.iter_mut().zip(grad) {
                        *g += d;
                    }
                });
                accum!(*b, |buf: &mut [F]| {
                    for (g, &d) in buf.iter_mut().zip(grad) {
                        *g -= d;
                    }
                });
            }
            Op::Mul { a, b } => {
                let av = self.nodes[*a].tensor.as_slice();
                let bv = self.nodes[*b].tensor.as_slice();
                accum!(*a, |buf: &mut [F]| {
                    for ((g, &bi), &gi) in buf.iter_mut().zip(bv).zip(grad) {
                        *g += gi * bi;
                    }
                });
                accum!(*b, |buf: &mut [F]| {
                    for ((g, &ai), &gi) in buf.iter_mut().zip(av).zip(grad) {
                        *g += gi * ai;
                    }
                });
            }
            Op::AbsDiff { a, b } => {
                let av = self.nodes[*a].tensor.as_slice();
                let bv = self.nodes[*b].tensor.as_slice();
                let sign = |x: F, y: F| {
                    if x > y {
                        F::one()
                    } else if x < y {
                        -F::one()
                    } else {
                        F::zero()
                    }
                };
                accum!(*a, |buf: &mut [F]| {
                    for (k, g) in buf.iter_mut().enumerate() {
                        *g += grad[k] * sign(av[k], bv[k]);
                    }
                });
                accum!(*b, |buf: &mut [F]| {
                    for (k, g) in buf.iter_mut().enumerate() {
                        *g -= grad[k] * sign(av[k], bv[k]);
                    }
                });
            }
            Op::Scale { x, c } => {
                let c = *c;
                accum!(*x, |buf: &mut [F]| {
                    for (g, &d) in buf.iter_mut().zip(grad) {
                        *g += c * d;
                    }
                });
            }
            Op::Softmax { x } => {
                let y = self.nodes[i].tensor.as_slice();
                let mut dot = F::zero();
                for (&gi, &yi) in grad.iter().zip(y) {
                    dot += gi * yi;
                }
                accum!(*x, |buf: &mut [F]| {
                    for ((g, &yi), &gi) in buf.iter_mut().zip(y).zip(grad) {
                        *g += yi * (gi - dot);
                    }
                });
            }
            Op::KlDiv { target, pred } => {
                let q = self.nodes[*pred].tensor.as_slice();
                let g0 = grad[0];
                accum!(*pred, |buf: &mut [F]| {
                    for ((g, &p), &qi) in buf.iter_mut().zip(target).zip(q) {
                        *g -= g0 * p / qi;
                    }
                });
            }
            Op::Sum { x } => {
                let g0 = grad[0];
                accum!(*x, |buf: &mut [F]| {
                    for g in buf.iter_mut() {
                        *g += g0;
                    }
                });
            }
        }
    }

    /// Add each parameter-backed leaf gradient into the store's persistent
    /// buffers, in node order.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<F>) -> Result<()> {
        for node in &self.nodes {
            if let (Some(id), Some(grad)) = (node.param, node.tensor.grad()) {
                store.accumulate_grad(id, grad)?;
            }
        }
        Ok(())
    }

    fn shape_of(&self, id: VarId) -> Shape {
        self.nodes[id.0].tensor.shape()
    }

    fn elementwise_values(
        &self,
        op: &'static str,
        a: VarId,
        b: VarId,
        f: impl Fn(F, F) -> F,
    ) -> Result<Tensor<F>> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Error::DimensionMismatch {
                op,
                lhs: sa.to_string(),
                rhs: sb.to_string(),
            });
        }
        let out: Vec<F> = self.nodes[a.0]
            .tensor
            .as_slice()
            .iter()
            .zip(self.nodes[b.0].tensor.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(reshaped(out, sa))
    }

    fn record(&mut self, tensor: Tensor<F>, op: Op<F>) -> VarId {
        let requires = match &op {
            Op::Leaf => tensor.requires_grad(),
            Op::MatVec { m: a, x: b }
            | Op::Concat { a, b }
            | Op::Add { a, b }
            | Op::Sub { a, b }
            | Op::Mul { a, b }
            | Op::AbsDiff { a, b } => {
                self.nodes[*a].tensor.requires_grad() || self.nodes[*b].tensor.requires_grad()
            }
            Op::Tanh { x }
            | Op::Relu { x }
            | Op::Scale { x, .. }
            | Op::Softmax { x }
            | Op::KlDiv { pred: x, .. }
            | Op::Sum { x } => self.nodes[*x].tensor.requires_grad(),
        };
        let tensor = if requires {
            tensor.with_requires_grad()
        } else {
            tensor
        };
        self.push(tensor, op, None)
    }
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn reshaped<F: Scalar>(data: Vec<F>, shape: Shape) -> Tensor<F> {
    match shape {
        Shape::Vector(_) => Tensor::vector(data),
        Shape::Matrix(r, c) => Tensor::matrix(r, c, data).expect("shape preserved"),
    }
}
