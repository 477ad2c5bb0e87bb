//! Scalar abstraction over the floating-point element type.

use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable as the element type of tensors, parameters,
/// and metrics: `f32` or `f64`.
pub trait Scalar: Float + NumAssignOps + Debug + Display + Default + Send + Sync + 'static {}

impl<T> Scalar for T where
    T: Float + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
}

/// Cast from `f64`, panicking only on values unrepresentable in `F`.
#[inline]
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from(x).expect("scalar cast")
}

/// Cast from `usize` counts (tree sizes, batch sizes).
#[inline]
pub fn cast_usize<F: Scalar>(n: usize) -> F {
    F::from(n).expect("scalar cast")
}
