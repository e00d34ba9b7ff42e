use std::ops::Index;

use serde::{Deserialize, Serialize};

use super::{Interval, IntervalError};

/// A box in R^n, stored as one interval per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalVector(Vec<Interval>);

impl Index<usize> for IntervalVector {
    type Output = Interval;

    fn index(&self, i: usize) -> &Interval {
        &self.0[i]
    }
}

impl From<Vec<Interval>> for IntervalVector {
    fn from(v: Vec<Interval>) -> Self {
        IntervalVector(v)
    }
}

impl FromIterator<Interval> for IntervalVector {
    fn from_iter<I: IntoIterator<Item = Interval>>(iter: I) -> Self {
        IntervalVector(iter.into_iter().collect())
    }
}

fn check_dim(expected: usize, found: usize, what: &str) -> Result<(), IntervalError> {
    if expected != found {
        return Err(IntervalError::Shape(format!(
            "{what}: expected dimension {expected}, found {found}"
        )));
    }
    Ok(())
}

impl IntervalVector {
    pub fn new(elems: Vec<Interval>) -> Self {
        IntervalVector(elems)
    }

    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self, IntervalError> {
        check_dim(lower.len(), upper.len(), "from_bounds")?;
        lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| Interval::new(l, u))
            .collect::<Result<Vec<_>, _>>()
            .map(IntervalVector)
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self, IntervalError> {
        pairs
            .iter()
            .map(|p| Interval::new(p[0], p[1]))
            .collect::<Result<Vec<_>, _>>()
            .map(IntervalVector)
    }

    pub fn point(x: &[f64]) -> Result<Self, IntervalError> {
        x.iter().map(|&v| Interval::point(v)).collect::<Result<Vec<_>, _>>().map(IntervalVector)
    }

    pub fn zeros(n: usize) -> Self {
        IntervalVector(vec![Interval::ZERO; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Interval] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<Interval> {
        self.0
    }

    pub fn set(&mut self, i: usize, v: Interval) {
        self.0[i] = v;
    }

    pub fn lower(&self) -> Vec<f64> {
        self.0.iter().map(Interval::lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.0.iter().map(Interval::hi).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.0.iter().map(Interval::midpoint).collect()
    }

    pub fn width(&self) -> Vec<f64> {
        self.0.iter().map(Interval::width).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.0.iter().map(Interval::width).fold(0.0, f64::max)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.0.iter().zip(x).all(|(i, &v)| i.contains(v))
    }

    /// `inner ⊆ self`.
    pub fn contains(&self, inner: &IntervalVector) -> Result<bool, IntervalError> {
        check_dim(self.dim(), inner.dim(), "contains")?;
        Ok(inner.0.iter().zip(&self.0).all(|(a, b)| a.is_subset_of(b)))
    }

    pub fn hull(&self, other: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        check_dim(self.dim(), other.dim(), "hull")?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.hull(b)).collect())
    }

    pub fn intersect(&self, other: &IntervalVector) -> Result<Option<IntervalVector>, IntervalError> {
        check_dim(self.dim(), other.dim(), "intersect")?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.intersect(b))
            .collect::<Option<Vec<_>>>()
            .map(IntervalVector))
    }

    pub fn add(&self, other: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        check_dim(self.dim(), other.dim(), "add")?;
        self.0.iter().zip(&other.0).map(|(a, b)| a.add(b)).collect::<Result<Vec<_>, _>>().map(IntervalVector)
    }

    pub fn sub(&self, other: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        check_dim(self.dim(), other.dim(), "sub")?;
        self.0.iter().zip(&other.0).map(|(a, b)| a.sub(b)).collect::<Result<Vec<_>, _>>().map(IntervalVector)
    }

    /// `self - c` for a real point `c`.
    pub fn sub_point(&self, c: &[f64]) -> Result<IntervalVector, IntervalError> {
        check_dim(self.dim(), c.len(), "sub_point")?;
        self.0
            .iter()
            .zip(c)
            .map(|(a, &v)| a.sub(&Interval::point(v)?))
            .collect::<Result<Vec<_>, _>>()
            .map(IntervalVector)
    }

    /// The lower face `[lo, hi_{i:lo}]` (coordinate `i` pinned to its lower end).
    pub fn lower_face(&self, i: usize) -> IntervalVector {
        let mut f = self.clone();
        f.0[i] = Interval::from_ordered(self.0[i].lo(), self.0[i].lo());
        f
    }

    /// The upper face `[lo_{i:hi}, hi]`.
    pub fn upper_face(&self, i: usize) -> IntervalVector {
        let mut f = self.clone();
        f.0[i] = Interval::from_ordered(self.0[i].hi(), self.0[i].hi());
        f
    }
}
