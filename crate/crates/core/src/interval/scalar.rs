use std::fmt;

use serde::{Deserialize, Serialize};

use super::round::{add_dn, add_up, div_dn, div_up, mul_dn, mul_up};
use super::IntervalError;

/// A closed real interval `[lo, hi]` with finite endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = IntervalError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(IntervalError::NonFinite { lo, hi });
        }
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// The degenerate interval `[v, v]`.
    pub fn point(v: f64) -> Result<Self, IntervalError> {
        Interval::new(v, v)
    }

    /// Construction for endpoints already known to be valid.
    pub(crate) fn from_ordered(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi && lo.is_finite() && hi.is_finite(), "[{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Validates endpoints produced by arithmetic, reporting overflow.
    pub(crate) fn checked(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        Interval::new(lo, hi)
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// A point of the interval close to its center; always inside.
    pub fn midpoint(&self) -> f64 {
        (0.5 * self.lo + 0.5 * self.hi).clamp(self.lo, self.hi)
    }

    pub fn radius(&self) -> f64 {
        let m = self.midpoint();
        (m - self.lo).max(self.hi - m)
    }

    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn is_thin(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::from_ordered(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn neg(&self) -> Interval {
        Interval::from_ordered(-self.hi, -self.lo)
    }

    pub fn add(&self, other: &Interval) -> Result<Interval, IntervalError> {
        Interval::checked(add_dn(self.lo, other.lo), add_up(self.hi, other.hi))
    }

    pub fn sub(&self, other: &Interval) -> Result<Interval, IntervalError> {
        Interval::checked(add_dn(self.lo, -other.hi), add_up(self.hi, -other.lo))
    }

    pub fn mul(&self, other: &Interval) -> Result<Interval, IntervalError> {
        let (a, b) = (self, other);
        if a.is_thin() && b.is_thin() {
            return Interval::checked(mul_dn(a.lo, b.lo), mul_up(a.lo, b.lo));
        }
        let lo = mul_dn(a.lo, b.lo)
            .min(mul_dn(a.lo, b.hi))
            .min(mul_dn(a.hi, b.lo))
            .min(mul_dn(a.hi, b.hi));
        let hi = mul_up(a.lo, b.lo)
            .max(mul_up(a.lo, b.hi))
            .max(mul_up(a.hi, b.lo))
            .max(mul_up(a.hi, b.hi));
        Interval::checked(lo, hi)
    }

    /// Product with a real scalar treated as exact.
    pub fn scale(&self, c: f64) -> Result<Interval, IntervalError> {
        if c >= 0.0 {
            Interval::checked(mul_dn(self.lo, c), mul_up(self.hi, c))
        } else {
            Interval::checked(mul_dn(self.hi, c), mul_up(self.lo, c))
        }
    }

    /// Division; the divisor must not contain zero.
    pub fn div(&self, other: &Interval) -> Result<Interval, IntervalError> {
        if other.contains_zero() {
            return Err(IntervalError::Domain {
                func: "division",
                lo: other.lo,
                hi: other.hi,
            });
        }
        let (a, b) = (self, other);
        let lo = div_dn(a.lo, b.lo)
            .min(div_dn(a.lo, b.hi))
            .min(div_dn(a.hi, b.lo))
            .min(div_dn(a.hi, b.hi));
        let hi = div_up(a.lo, b.lo)
            .max(div_up(a.lo, b.hi))
            .max(div_up(a.hi, b.lo))
            .max(div_up(a.hi, b.hi));
        Interval::checked(lo, hi)
    }

    /// Intersection, or `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::from_ordered(lo, hi))
    }
}
