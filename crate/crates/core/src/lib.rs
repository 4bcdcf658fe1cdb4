//! Tools for asking whether a trained classifier interpolates: recover the
//! low-dimensional latent space behind its last hidden layer with a
//! bottleneck autoencoder, test convex-hull membership of test samples in
//! that space, and relate correctness to distance from the training set.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hull;
pub mod linalg;
pub mod nn;
pub mod plot;
pub mod probe;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
