//! One-class novelty detection with an adversarially trained masking
//! network and an inpainting reconstructor.
//!
//! The mask module learns where to hide pixels so that the reconstructor's
//! error is largest; the reconstructor learns to fill them back in. At test
//! time, reconstruction errors of masked and unmasked inputs become anomaly
//! scores.

pub mod config;
pub mod data;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod reconstructor;
pub mod scoring;
pub mod tensor;
pub mod training;

pub use error::{OledError, Result};
pub use tensor::Tensor;
