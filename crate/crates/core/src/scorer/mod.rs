//! The differentiable trajectory-scoring planner.

pub mod autodiff;
pub mod checkpoint;
pub mod decoder;
pub mod evidential;
pub mod features;
pub mod losses;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use decoder::{
    aggregate, aggregate_on_tape, decode_on_tape, forward, select_trajectory, DecoderParams, DecoderVars,
    InputNormalizer, PlannerParams, ScoreTable, DEFAULT_LAYER_SIZES, SCORE_FEATURES,
};
pub use evidential::{
    evidential_loss, forward_regression, sample_nig, train_regression, EvidentialOutput, RegressionParams,
};
pub use features::{encode_scene, encode_trajectory, SceneFeatures, TrajectoryFeatures};
pub use losses::{backward, imitation_loss, kd_loss, loss_total};
pub use train::{train, train_with, Optimizer, TrainConfig, TrainOutcome, TrainingDataset, TrainingRecord};
