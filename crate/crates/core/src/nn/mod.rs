//! Minimal CNN substrate: the six layer kinds both stages need, softmax
//! cross-entropy, backpropagation, Adam and a finite-difference gradient
//! checker.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod train;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_sampled};
pub use layers::{layer_tag, Activation, Conv2D, Dense, Dropout, Layer, LayerSpec};
pub use loss::{cross_entropy, cross_entropy_grad, one_hot};
pub use network::{Gradients, Mode, Network, Topology, Trace};
pub use train::{evaluate, fit, EpochStats, Examples, History, TrainConfig};
