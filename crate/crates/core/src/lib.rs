//! Graph collaborative filtering with a LightGCN backbone and layer-to-layer
//! contrastive objectives.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numeric part of
//! the pipeline: interaction filtering and splitting, the normalized
//! propagation operator, forward propagation, the ranking and contrastive
//! losses with hand-derived gradients, sparse backward propagation, lazy Adam,
//! all-rank evaluation and the training loop. File formats, timing and the
//! command line live in the `layercl` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod grad;
pub mod graph;
pub mod losses;
pub mod math;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use grad::{MatrixId, RowGrads};
pub use graph::{InteractionGraph, PropagationOperator};
pub use matrix::Matrix;
pub use model::{EmbeddingTable, LayerStack, ReadoutMode};
pub use scalar::Scalar;
