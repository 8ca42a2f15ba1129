//! Dense-network training core: forward/backward passes, dropout, softmax
//! cross-entropy, Adam, MC-dropout loss intervals, and model serialization.

pub mod backward;
pub mod io;
pub mod loss;
pub mod mc;
pub mod model;
pub mod optim;

pub use backward::{backward, LayerGradients, ModelGradients};
pub use io::{load_model, save_model, SCHEMA_VERSION};
pub use loss::{cross_entropy, cross_entropy_grad, softmax};
pub use mc::{mc_dropout_interval, PredictionInterval};
pub use model::{Activation, ForwardTrace, LayerSpec, Mlp};
pub use optim::{Adam, AdamConfig};
