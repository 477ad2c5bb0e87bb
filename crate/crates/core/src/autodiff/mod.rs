//! Reverse-mode automatic differentiation over dense rank-1/rank-2 tensors,
//! the AdaGrad optimizer, and a finite-difference gradient oracle.

mod adagrad;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adagrad::AdaGrad;
pub use gradcheck::{grad_check, FlaggedEntry, GradCheckReport};
pub use graph::{Activation, Graph, VarId};
pub use params::{ParamId, ParamStore};
pub use tensor::{Shape, Tensor};
