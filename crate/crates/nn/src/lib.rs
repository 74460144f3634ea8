//! Minimal differentiable numeric core: dense tensors, a reverse-mode tape
//! covering the operators used by the sequence models, Adam, and a binary
//! checkpoint container.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod init;
mod kernels;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use graph::{softmax, Gradients, Graph, Var};
pub use kernels::SameAxis;
pub use lstm::{lstm_cell, lstm_sequence, LstmParams};
pub use optim::{AdamConfig, AdamState};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;
