//! The numerical training core: tensors with gradient slots, layer
//! forward/backward passes, recurrent cells, losses and optimizers.

pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod rnn;
pub mod scalar;
pub mod tensor;

pub use optim::{clip_gradients, l2_penalty, l2_penalty_backward, Adam, Optimizer, OptimizerKind, Sgd};
pub use rng::{derive_seed, Purpose, RngStream};
pub use rnn::{run_rnn, run_rnn_backward, CellKind, RnnStack};
pub use scalar::Scalar;
pub use tensor::{Parameter, Tensor};
