//! Training engine for fully-connected networks where hidden layers learn from
//! fixed random feedback weights driven by per-sample error information that
//! is delayed by one epoch, alongside the usual baselines (backpropagation,
//! direct feedback alignment, direct random target projection and
//! last-layer-only training).
//!
//! Modules, bottom-up:
//!
//! - [`tensor`]: dense row-major containers and the handful of kernels the
//!   rest of the crate needs, with an optional probe for counting FMAs.
//! - [`model`]: network definition, activations, losses, forward pass and
//!   exact backpropagation.
//! - [`feedback`]: feedback weight banks, error-information variants and the
//!   delayed error store.
//! - [`trainer`]: per-sample updates for every algorithm, SGD/Adam and the
//!   batched epoch loop.
//! - [`data`]: MNIST, CIFAR-10, Census Income and SGEMM loaders,
//!   standardization and seeded batching.
//! - [`costmodel`]: closed-form FMA and memory accounting.

pub mod costmodel;
pub mod data;
pub mod feedback;
pub mod model;
pub mod tensor;
pub mod trainer;

mod error;

pub use error::{Error, Result};
pub use tensor::{DenseMatrix, DenseVector, Scalar, ShapeError};
