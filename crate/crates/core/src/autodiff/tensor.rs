//! Dense rank-1/rank-2 value buffers.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Extent of a tensor: a vector of length `n` or a row-major `rows x cols`
/// matrix. Rank > 2 never occurs in this model family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rank(&self) -> usize {
        match self {
            Shape::Vector(_) => 1,
            Shape::Matrix(_, _) => 2,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// A dense numeric array with an optional gradient buffer of the same shape.
///
/// Values are stored row-major. `requires_grad` marks trainable parameters
/// and interior nodes on a differentiable path; `grad` is populated by the
/// backward pass and cleared by the optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Shape,
    data: Vec<F>,
    requires_grad: bool,
    grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn vector(data: Vec<F>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "matrix",
                lhs: format!("[{rows}x{cols}]"),
                rhs: format!("{} values", data.len()),
            });
        }
        Ok(Tensor {
            shape: Shape::Matrix(rows, cols),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![F::zero(); shape.len()],
            requires_grad: false,
            grad: None,
        }
    }

    /// Scalar wrapped as a one-element vector.
    pub fn scalar(value: F) -> Self {
        Tensor::vector(vec![value])
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub(crate) fn detached(mut self) -> Self {
        self.requires_grad = false;
        self.grad = None;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Row-major element of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> F {
        match self.shape {
            Shape::Matrix(_, cols) => self.data[row * cols + col],
            Shape::Vector(_) => panic!("at() on rank-1 tensor"),
        }
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [F]> {
        self.grad.as_deref_mut()
    }

    /// Gradient buffer, allocated zeroed on first use.
    pub fn grad_or_init(&mut self) -> &mut [F] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![F::zero(); n])
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn set_grad(&mut self, grad: Vec<F>) {
        debug_assert_eq!(grad.len(), self.data.len());
        self.grad = Some(grad);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_len_matches_storage() {
        let t = Tensor::<f64>::matrix(2, 3, vec![0.0; 6]).unwrap();
        assert_eq!(t.shape().len(), t.len());
        assert_eq!(t.at(1, 2), 0.0);
    }

    #[test]
    fn matrix_rejects_wrong_element_count() {
        assert!(Tensor::<f64>::matrix(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn empty_vector_is_valid() {
        let t = Tensor::<f64>::vector(vec![]);
        assert_eq!(t.shape(), Shape::Vector(0));
        assert!(t.is_empty());
    }

    #[test]
    fn grad_buffer_matches_shape() {
        let mut t = Tensor::vector(vec![1.0f64, 2.0]).with_requires_grad();
        t.grad_or_init()[1] = 5.0;
        assert_eq!(t.grad().unwrap(), &[0.0, 5.0]);
        t.clear_grad();
        assert!(t.grad().is_none());
    }
}
