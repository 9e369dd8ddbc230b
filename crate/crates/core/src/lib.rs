//! Face sketch synthesis built from scratch: a small tensor core with
//! explicit forward/backward functions for every operator (no autograd
//! tape), a generator with a deformable decoder and region-adaptive
//! filtering, a patch discriminator, a reproducible trainer, image quality
//! metrics, and PNM/PNG image IO with synthetic fixtures.
//!
//! Everything numeric is generic over [`scalar::Scalar`]; training runs in
//! f32, gradient checking in f64.

pub mod adaptive;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f32 tensor: the training and inference element type.
pub type Tensor32 = tensor::Tensor<f32>;
/// f64 tensor: the gradient-checking element type.
pub type Tensor64 = tensor::Tensor<f64>;
