//! featimp-core: loss-estimator-guided feature importance.
//!
//! The toolkit jointly trains a dense predictive network with an auxiliary
//! loss estimator, derives post-hoc per-feature importance scores by masking
//! features and reading the change in the estimated loss, and measures the
//! fidelity of those attributions via the delta-log-odds of top-k% masking,
//! including on distribution-shifted data.
//!
//! Modules:
//! - [`nn`]: the dense network (forward/backward, Adam, MC-dropout
//!   intervals, model files)
//! - [`estimator`]: the loss estimator and the joint training objectives
//! - [`attribution`]: masking strategies and per-feature importance scores
//! - [`evaluation`]: delta-log-odds fidelity reports and severity sweeps
//! - [`synth`]: synthetic dataset generators (distribution-shift triples,
//!   digit-style tabular data)

pub mod attribution;
pub mod data;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod gradcheck;
pub mod nn;
pub mod seeds;
pub mod stats;
pub mod synth;

pub use attribution::{
    explain_batch, granger_scores, mask_feature, oracle_granger_scores, AttributionResult,
    MaskingStrategy,
};
pub use data::{holdout_split, Dataset};
pub use error::{Error, Result};
pub use estimator::{
    contrastive_loss, dropout_calibration_loss, joint_train, IndicatorMode, JointTrainConfig,
    LossEstimator, Objective, TrainHistory,
};
pub use evaluation::{
    delta_log_odds, evaluate_explainer, random_ranking_baseline, severity_sweep, EvalReport,
};
pub use nn::{
    cross_entropy, load_model, mc_dropout_interval, save_model, Activation, Adam, AdamConfig,
    ForwardTrace, LayerSpec, Mlp, PredictionInterval,
};
pub use synth::{digit_style_dataset, generate_triple, ShiftSpec, ShiftTriple};
