//! Minimal convolutional network engine: `f64` layers with hand-written
//! backward passes, SGD and Adam, and builders for the two image models.
//!
//! Activations are laid out sample-major, then channel, row, column.

mod arch;
mod io;
mod layers;
mod network;
mod ops;
mod optim;
mod tensor;
mod train;

pub use arch::{build_encoder_cnn, build_multilayer_cnn, ENCODER_A_INPUT, ENCODER_B_INPUT, MULTILAYER_INPUT};
pub use io::{decode_network, encode_network, load_network, save_network, NETWORK_FORMAT};
pub use layers::{LayerSpec, Padding, Shape};
pub use network::{mse_loss, BranchSpec, ForwardCache, Gradients, LayerInfo, Network, NetworkSpec};
pub use optim::{adam_step, sgd_step, AdamHyper, AdamState, Optimizer, OptimizerKind};
pub use tensor::Tensor;
pub use train::{batch_inputs, predict_examples, train, Example, TrainConfig, TrainReport};
