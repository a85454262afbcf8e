//! A deliberately small dense autodiff engine.
//!
//! Values are row-major `f64` arrays of rank 0, 1 or 2. A [`Graph`] records
//! every operation of one forward pass as a node; [`Graph::backward`] then
//! walks the tape in reverse creation order (which is a topological order)
//! and accumulates gradients. Trainable values live in a [`ParamStore`] and
//! enter a graph through [`Graph::param`]; everything else is a constant.

mod adam;
mod checkpoint;
mod error;
mod graph;
mod params;
mod tensor;

#[cfg(any(test, feature = "gradcheck"))]
pub mod gradcheck;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::TensorError;
pub use graph::{Graph, Var};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tensor::Tensor;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
