//! Minimal deterministic network engine: explicit per-layer forward and
//! backward passes, an Adam optimizer, and a finite-difference checker.

mod gemm;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod stack;

pub use layers::{BatchNorm, Conv2d, ConvTranspose2d, Dense, Layer, LayerKind};
pub use optim::{Adam, AdamConfig};
pub use stack::{Gradients, LayerStack, Mode, Tape};
