pub mod modular;
pub mod resnet;
pub mod svm;

pub use modular::{build_intent_features, intent_rows, FrameActions, ModularConfig, ModularModel, ModularPrediction};
pub use resnet::{train_resnet, Resnet1d, ResnetConfig, ResnetTrainConfig, Standardizer};
pub use svm::{rbf, train_svc, SvmConfig, SvmFit, SvmModel};
