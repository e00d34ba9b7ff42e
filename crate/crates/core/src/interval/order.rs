//! Corner-pair representation of boxes and the southeast order.

use serde::{Deserialize, Serialize};

use super::{IntervalError, IntervalVector};

/// A point of the embedding space: a lower and an upper corner with
/// `lower <= upper` component-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingState {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl EmbeddingState {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, IntervalError> {
        // Reuse the interval constructor's checks.
        IntervalVector::from_bounds(&lower, &upper)?;
        Ok(EmbeddingState { lower, upper })
    }

    pub fn from_box(b: &IntervalVector) -> Self {
        EmbeddingState { lower: b.lower(), upper: b.upper() }
    }

    pub fn to_box(&self) -> IntervalVector {
        IntervalVector::from_bounds(&self.lower, &self.upper)
            .expect("EmbeddingState invariant: lower <= upper, finite")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `self <=_SE other`, i.e. `other`'s box is nested inside `self`'s.
    pub fn se_leq(&self, other: &EmbeddingState) -> Result<bool, IntervalError> {
        se_leq(&self.lower, &self.upper, &other.lower, &other.upper)
    }
}

/// Southeast order on corner pairs: `(x, x̂) <=_SE (y, ŷ)` iff `x <= y` and `ŷ <= x̂`.
pub fn se_leq(x: &[f64], x_hat: &[f64], y: &[f64], y_hat: &[f64]) -> Result<bool, IntervalError> {
    let n = x.len();
    if x_hat.len() != n || y.len() != n || y_hat.len() != n {
        return Err(IntervalError::Shape("se_leq: corner dimensions differ".into()));
    }
    Ok((0..n).all(|i| x[i] <= y[i] && y_hat[i] <= x_hat[i]))
}

/// `x` with its `i`-th entry replaced by `y[i]`.
pub fn replace_index(x: &[f64], i: usize, y: &[f64]) -> Result<Vec<f64>, IntervalError> {
    if x.len() != y.len() {
        return Err(IntervalError::Shape(format!(
            "replace_index: lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if i >= x.len() {
        return Err(IntervalError::Index { index: i, dim: x.len() });
    }
    let mut out = x.to_vec();
    out[i] = y[i];
    Ok(out)
}
