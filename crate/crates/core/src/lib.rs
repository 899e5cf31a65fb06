//! Adversarial-example generation and hidden-layer manifold analysis for small
//! image classifiers.
//!
//! The crate is organised bottom-up: [`nn`] trains networks and supplies input
//! gradients, [`data`] parses datasets, [`attacks`] crafts adversarial and
//! rubbish inputs, [`atlas`] captures activations and answers exact k-NN
//! queries, [`geometry`] runs the per-layer analyses, and [`report`] renders
//! tables, embeddings and plots.

pub mod atlas;
pub mod attacks;
pub mod data;
pub mod geometry;
pub mod nn;
pub mod report;
pub mod seed;
pub mod tensor;

pub use tensor::{Tensor, TensorError};
