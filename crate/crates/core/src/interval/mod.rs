//! Outward-rounded interval arithmetic over scalars, vectors and matrices.

mod elementary;
mod matrix;
mod order;
mod round;
mod scalar;
mod vector;

use thiserror::Error;

pub use elementary::{elem_minimal, ElemFn};
pub use matrix::{pos_neg_split, real_mul_vec, IntervalMatrix};
pub use order::{replace_index, se_leq, EmbeddingState};
pub use round::{rounding_mode, set_rounding_mode, RoundingMode};
pub use scalar::Interval;
pub use vector::IntervalVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("non-finite interval endpoint in [{lo}, {hi}]")]
    NonFinite { lo: f64, hi: f64 },
    #[error("inverted interval: lower endpoint {lo} exceeds upper endpoint {hi}")]
    Inverted { lo: f64, hi: f64 },
    #[error("{func} is undefined on [{lo}, {hi}]")]
    Domain { func: &'static str, lo: f64, hi: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },
}
