//! The auxiliary loss estimator and its joint training procedure.

pub mod network;
pub mod objectives;
pub mod train;

pub use network::{EstimatorGradients, LossEstimator, DEFAULT_ESTIMATOR_UNITS};
pub use objectives::{
    contrastive_loss, dropout_calibration_loss, IndicatorMode, LossPair,
};
pub use train::{
    batch_gradients, capture_targets, evaluate_batch, heldout_spearman, joint_train, BatchEval,
    BatchTargets, EpochStats, JointTrainConfig, Objective, TrainHistory,
};
