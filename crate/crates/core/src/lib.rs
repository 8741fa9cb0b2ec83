//! Sparse m-ary neural trees trained with recursive backpropagation.
//!
//! A neural tree is a rooted tree whose leaves forward single input features,
//! whose internal nodes apply an activation to a weighted sum of their
//! children, and whose edges and biases are the trainable parameters. Trees
//! are generated stochastically (depth cap, arity cap, leaf probability) and
//! trained online or in mini-batches with one of six gradient-descent update
//! rules.
//!
//! The crate is generic over the scalar type through [`Scalar`] (implemented
//! for `f32` and `f64`); the [`NeuralTree32`] / [`NeuralTree64`] aliases pick
//! a concrete precision.
//!
//! Pipeline overview:
//!
//! - [`tree`]: the tree data model, stochastic generation, validation.
//! - [`forward`]: post-order forward pass producing a [`forward::ForwardTrace`].
//! - [`backprop`]: pre-order delta propagation and parameter gradients, plus a
//!   central-difference gradient oracle.
//! - [`optim`]: GD, momentum, Nesterov, Adagrad, RMSprop and Adam update rules.
//! - [`train`]: the epoch loop with shuffling, early stopping and best-model
//!   restoration.
//! - [`data`]: CSV / IDX ingestion, min-max normalization, splitting, and a
//!   synthetic regression generator.
//! - [`metrics`]: error rate, MSE, Nash–Sutcliffe r² and per-class rates.
//! - [`experiment`]: seeded multi-run orchestration behind the CLI.

pub mod activation;
pub mod backprop;
pub mod data;
pub mod dot;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod metrics;
pub mod model_io;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod tree;

pub use error::Error;
pub use scalar::Scalar;

/// Single-precision neural tree.
pub type NeuralTree32 = tree::NeuralTree<f32>;
/// Double-precision neural tree.
pub type NeuralTree64 = tree::NeuralTree<f64>;
/// Single-precision dataset.
pub type Dataset32 = data::Dataset<f32>;
/// Double-precision dataset.
pub type Dataset64 = data::Dataset<f64>;
