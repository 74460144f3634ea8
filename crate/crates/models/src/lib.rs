//! The multi-task VRU network, its training loop, and the modular per-task
//! baselines it is compared against.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod inputs;
pub mod layers;
pub mod smooth;
pub mod train;
pub mod vrunet;

pub use error::{ModelError, Result};
pub use eval::{evaluate_vrunet, EvalReport};
pub use inputs::ModelInputs;
pub use smooth::smooth_trajectory;
pub use train::{EpochLog, TrainConfig, TrainProgress, Trainer};
pub use vrunet::{ClassWeights, LossWeights, PredictionBundle, VruNet, VruNetConfig};
