//! Synthetic dataset generators.

pub mod digits;
pub mod gaussian;
pub(crate) mod linalg;

pub use digits::{digit_style_dataset, DIGIT_CLASSES, DIGIT_FEATURES};
pub use gaussian::{
    clamp_correlation, generate_triple, quantile_label, RealizedCorrelations, ShiftSpec,
    ShiftTriple,
};
