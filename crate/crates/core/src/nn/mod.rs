//! Dense feed-forward networks: forward pass, backpropagation, inverted
//! dropout, Adam, and the training/evaluation loops.
//!
//! All numerics are `f64`. Weights are stored `fan_in x fan_out` and batches
//! are row-major, so a layer computes `act(x W + b)`.

mod adam;
mod network;
mod train;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use network::{argmax, Activation, Dense, ForwardPass, Gradients, LayerSpec, Loss, Mode, Network, Targets};
pub use train::{evaluate, train, EpochStats, Evaluation, History, TrainConfig, TrainTargets};
