use thiserror::Error;

use crate::expr::ExprError;
use crate::interval::IntervalError;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("localization violation: {0}")]
    Localization(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("no equilibrium found: residual {residual:e} after {steps} steps")]
    NotConverged { residual: f64, steps: usize },
    #[error("transform error: {0}")]
    Transform(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
