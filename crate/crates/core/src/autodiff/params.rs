//! Named storage for trainable parameters.

use crate::autodiff::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to one parameter in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
///
/// Registration order is the canonical parameter order everywhere: optimizer
/// state, gradient accumulation, and checkpoints all iterate in it, which is
/// what makes training runs reproducible bit for bit.
#[derive(Clone, Debug)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Register a trainable tensor under a unique name.
    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor.with_requires_grad());
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    /// Total number of scalar entries across all parameters.
    pub fn value_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Add `grad` into the persistent gradient buffer of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[F]) -> Result<()> {
        let t = &mut self.tensors[id.0];
        if grad.len() != t.len() {
            return Err(Error::DimensionMismatch {
                op: "accumulate_grad",
                lhs: t.shape().to_string(),
                rhs: format!("[{}]", grad.len()),
            });
        }
        for (g, d) in t.grad_or_init().iter_mut().zip(grad) {
            *g += *d;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for t in &mut self.tensors {
            t.clear_grad();
        }
    }

    /// Squared L2 norm over every stored parameter value.
    pub fn squared_norm(&self) -> F {
        let mut acc = F::zero();
        for t in &self.tensors {
            for &v in t.as_slice() {
                acc += v * v;
            }
        }
        acc
    }

    pub fn shapes(&self) -> Vec<Shape> {
        self.tensors.iter().map(Tensor::shape).collect()
    }
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}
