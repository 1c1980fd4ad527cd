//! Deterministic dense tensors, reverse-mode autodiff and the 3D layers of a
//! small volumetric CNN.
//!
//! All kernels are generic over [`Scalar`] so the same code trains in `f32`
//! and verifies gradients in `f64`.

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;
pub mod par;
mod params;
mod rng;
mod scalar;
mod tensor;

pub use error::{Result, VolError};
pub use graph::{BnRunning, Gradients, Graph, Mode, Var};
pub use params::{kaiming_normal, Bound, Param, ParamKind, ParameterStore};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
