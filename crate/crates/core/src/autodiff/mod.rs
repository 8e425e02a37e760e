//! A small reverse-mode differentiation engine: tensors on a tape, named
//! parameters and the Adam optimizer.

pub mod kernels;
mod params;
mod tape;

pub use params::{AdamConfig, ParamId, ParamStore};
pub use tape::{Gradients, OpKind, Tape, Var};
