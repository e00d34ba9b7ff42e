//! Directed rounding on top of round-to-nearest hardware arithmetic.
//!
//! Each primitive computes the nearest result, recovers the exact rounding
//! error with an error-free transformation (TwoSum or FMA) and steps one ulp
//! in the unsafe direction only when the result was inexact. Exact results
//! therefore stay exact, which keeps thin intervals thin.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

/// Rounding policy for interval endpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    /// Outward-rounded endpoints; certificates are machine-sound.
    #[default]
    Sound,
    /// Round-to-nearest endpoints. Faster, but NOT sound: certificates
    /// produced in this mode may be invalidated by floating-point error.
    Fast,
}

static FAST: AtomicBool = AtomicBool::new(false);

/// Sets the process-wide rounding policy.
pub fn set_rounding_mode(mode: RoundingMode) {
    FAST.store(mode == RoundingMode::Fast, Ordering::Relaxed);
}

pub fn rounding_mode() -> RoundingMode {
    if FAST.load(Ordering::Relaxed) {
        RoundingMode::Fast
    } else {
        RoundingMode::Sound
    }
}

#[inline]
fn fast() -> bool {
    FAST.load(Ordering::Relaxed)
}

// Below this magnitude an FMA residual may itself underflow, so the
// exactness test is not trustworthy and we widen unconditionally.
const TINY: f64 = 1e-290;

#[inline]
fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

#[inline]
pub(crate) fn add_dn(a: f64, b: f64) -> f64 {
    let s = a + b;
    if fast() || !s.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if fast() || !s.is_finite() {
        return s;
    }
    if two_sum_err(a, b, s) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

#[inline]
pub(crate) fn mul_dn(a: f64, b: f64) -> f64 {
    let p = a * b;
    if fast() || !p.is_finite() {
        return p;
    }
    if p != 0.0 && p.abs() < TINY || p == 0.0 && a != 0.0 && b != 0.0 {
        return p.next_down();
    }
    if a.mul_add(b, -p) < 0.0 {
        p.next_down()
    } else {
        p
    }
}

#[inline]
pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if fast() || !p.is_finite() {
        return p;
    }
    if p != 0.0 && p.abs() < TINY || p == 0.0 && a != 0.0 && b != 0.0 {
        return p.next_up();
    }
    if a.mul_add(b, -p) > 0.0 {
        p.next_up()
    } else {
        p
    }
}

/// Sign of the exact quotient residual `a/b - fl(a/b)`.
#[inline]
fn div_residual_sign(a: f64, b: f64, q: f64) -> f64 {
    // a - q*b carries the sign of (a/b - q) * b.
    let r = (-q).mul_add(b, a);
    if b > 0.0 {
        r
    } else {
        -r
    }
}

#[inline]
pub(crate) fn div_dn(a: f64, b: f64) -> f64 {
    let q = a / b;
    if fast() || !q.is_finite() {
        return q;
    }
    if q != 0.0 && q.abs() < TINY || q == 0.0 && a != 0.0 {
        return q.next_down();
    }
    if div_residual_sign(a, b, q) < 0.0 {
        q.next_down()
    } else {
        q
    }
}

#[inline]
pub(crate) fn div_up(a: f64, b: f64) -> f64 {
    let q = a / b;
    if fast() || !q.is_finite() {
        return q;
    }
    if q != 0.0 && q.abs() < TINY || q == 0.0 && a != 0.0 {
        return q.next_up();
    }
    if div_residual_sign(a, b, q) > 0.0 {
        q.next_up()
    } else {
        q
    }
}

#[inline]
pub(crate) fn sqrt_dn(x: f64) -> f64 {
    let r = x.sqrt();
    if fast() || r == 0.0 || !r.is_finite() {
        return r;
    }
    if (-r).mul_add(r, x) < 0.0 {
        r.next_down()
    } else {
        r
    }
}

#[inline]
pub(crate) fn sqrt_up(x: f64) -> f64 {
    let r = x.sqrt();
    if fast() || r == 0.0 || !r.is_finite() {
        return r;
    }
    if (-r).mul_add(r, x) > 0.0 {
        r.next_up()
    } else {
        r
    }
}

/// Lower bound for a libm result that is faithful to within one ulp.
#[inline]
pub(crate) fn libm_dn(v: f64) -> f64 {
    if fast() {
        v
    } else {
        v.next_down().next_down()
    }
}

#[inline]
pub(crate) fn libm_up(v: f64) -> f64 {
    if fast() {
        v
    } else {
        v.next_up().next_up()
    }
}

/// `x^n` for `x >= 0`, rounded down, by square-and-multiply.
pub(crate) fn powu_nonneg_dn(x: f64, n: u32) -> f64 {
    debug_assert!(x >= 0.0);
    let mut result = 1.0;
    let mut base = x;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = mul_dn(result, base);
        }
        e >>= 1;
        if e > 0 {
            base = mul_dn(base, base);
        }
    }
    result.max(0.0)
}

pub(crate) fn powu_nonneg_up(x: f64, n: u32) -> f64 {
    debug_assert!(x >= 0.0);
    let mut result = 1.0;
    let mut base = x;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = mul_up(result, base);
        }
        e >>= 1;
        if e > 0 {
            base = mul_up(base, base);
        }
    }
    result
}
