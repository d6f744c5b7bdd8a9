//! Image-level argument regression: features, cascade and multi-head
//! regressors, stage/dynamic losses, training, inference and video smoothing.

pub mod ema;
pub mod features;
pub mod infer;
pub mod loss;
pub mod model;
pub mod train;

pub use ema::{ema_update, EmaState, DEFAULT_EMA_ALPHA};
pub use features::{extract_features, model_features, FeatureVector, FEATURE_DIM};
pub use infer::{apply_args, harmonize, predict_args};
pub use loss::{dynamic_reweight, stage_losses, total_loss, LossConfig, LossMode, LossReport};
pub use model::{ModelShape, RegressorMode, RegressorModel};
pub use train::{
    batch_gradient, sample_gradient, train, train_step, AdamState, Optimizer, TrainConfig,
    TrainOutcome, TrainingExample,
};
