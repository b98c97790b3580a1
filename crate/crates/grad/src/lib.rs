//! Reverse-mode differentiable arrays: a define-by-run tape over dense
//! row-major tensors, the primitive set used by the renderer, policy and
//! curiosity models, Adam, and a finite-difference gradient checker.

mod backward;
pub mod check;
mod error;
mod graph;
pub mod optim;
mod params;
mod scalar;
pub mod suite;
mod tensor;

pub use backward::Gradients;
pub use check::{check_gradients, GradCheckConfig, GradCheckReport, GraphLoss, Objective};
pub use error::{GradError, Result};
pub use graph::{gaussian_kernel, image, Graph, Mask, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{init, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::{numel, Tensor};
