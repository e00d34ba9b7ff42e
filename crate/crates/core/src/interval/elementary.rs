//! Minimal inclusion functions for the elementary functions.
//!
//! Monotone pieces are evaluated at the endpoints, interior extrema are found
//! by critical-point analysis. libm results are faithful but not correctly
//! rounded, so their endpoints are widened by two ulps in sound mode.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::round::{libm_dn, libm_up, powu_nonneg_dn, powu_nonneg_up};
use super::{Interval, IntervalError};

/// Elementary functions with a minimal interval extension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElemFn {
    Tanh,
    Exp,
    Sin,
    Cos,
    Sqrt,
    PowInt(i32),
    Reciprocal,
    Abs,
    Relu,
    Sigmoid,
}

impl ElemFn {
    pub fn name(&self) -> &'static str {
        match self {
            ElemFn::Tanh => "tanh",
            ElemFn::Exp => "exp",
            ElemFn::Sin => "sin",
            ElemFn::Cos => "cos",
            ElemFn::Sqrt => "sqrt",
            ElemFn::PowInt(_) => "pow_int",
            ElemFn::Reciprocal => "reciprocal",
            ElemFn::Abs => "abs",
            ElemFn::Relu => "relu",
            ElemFn::Sigmoid => "sigmoid",
        }
    }

    /// Plain floating-point evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ElemFn::Tanh => x.tanh(),
            ElemFn::Exp => x.exp(),
            ElemFn::Sin => x.sin(),
            ElemFn::Cos => x.cos(),
            ElemFn::Sqrt => x.sqrt(),
            ElemFn::PowInt(n) => x.powi(n),
            ElemFn::Reciprocal => 1.0 / x,
            ElemFn::Abs => x.abs(),
            ElemFn::Relu => x.max(0.0),
            ElemFn::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Interval image of `a`.
    pub fn apply(&self, a: &Interval) -> Result<Interval, IntervalError> {
        elem_minimal(*self, a)
    }
}

/// Tightest (up to outward rounding) enclosure of `f` over `a`.
pub fn elem_minimal(f: ElemFn, a: &Interval) -> Result<Interval, IntervalError> {
    match f {
        ElemFn::Tanh => Ok(tanh(a)),
        ElemFn::Exp => exp(a),
        ElemFn::Sin => Ok(sin(a)),
        ElemFn::Cos => Ok(cos(a)),
        ElemFn::Sqrt => sqrt(a),
        ElemFn::PowInt(n) => pow_int(a, n),
        ElemFn::Reciprocal => recip(a),
        ElemFn::Abs => Ok(abs(a)),
        ElemFn::Relu => Ok(Interval::from_ordered(a.lo().max(0.0), a.hi().max(0.0))),
        ElemFn::Sigmoid => sigmoid(a),
    }
}

fn tanh(a: &Interval) -> Interval {
    let lo = if a.lo() == 0.0 { 0.0 } else { libm_dn(a.lo().tanh()) };
    let hi = if a.hi() == 0.0 { 0.0 } else { libm_up(a.hi().tanh()) };
    Interval::from_ordered(lo.max(-1.0), hi.min(1.0))
}

fn exp(a: &Interval) -> Result<Interval, IntervalError> {
    let lo = if a.lo() == 0.0 { 1.0 } else { libm_dn(a.lo().exp()).max(0.0) };
    let hi = if a.hi() == 0.0 { 1.0 } else { libm_up(a.hi().exp()) };
    Interval::checked(lo, hi)
}

fn sigmoid(a: &Interval) -> Result<Interval, IntervalError> {
    let e = exp(&a.neg())?;
    let s = Interval::ONE.add(&e)?;
    let r = Interval::ONE.div(&s)?;
    Ok(Interval::from_ordered(r.lo().max(0.0), r.hi().min(1.0)))
}

/// Whether some `offset + k*TAU` lies in `[lo, hi]`, erring towards `true`.
fn hits_lattice(lo: f64, hi: f64, offset: f64) -> bool {
    let slack = 1e-13 * (1.0 + lo.abs().max(hi.abs()));
    let k0 = ((lo - offset) / TAU).floor();
    (-1..=2).any(|dk| {
        let c = offset + (k0 + dk as f64) * TAU;
        c >= lo - slack && c <= hi + slack
    })
}

fn periodic(a: &Interval, f: fn(f64) -> f64, max_at: f64, min_at: f64, exact_at_zero: f64) -> Interval {
    if a.width() >= TAU {
        return Interval::from_ordered(-1.0, 1.0);
    }
    let eval = |x: f64| if x == 0.0 { (exact_at_zero, exact_at_zero) } else {
        let v = f(x);
        (libm_dn(v), libm_up(v))
    };
    let (l0, h0) = eval(a.lo());
    let (l1, h1) = eval(a.hi());
    let mut lo = l0.min(l1);
    let mut hi = h0.max(h1);
    if hits_lattice(a.lo(), a.hi(), max_at) {
        hi = 1.0;
    }
    if hits_lattice(a.lo(), a.hi(), min_at) {
        lo = -1.0;
    }
    Interval::from_ordered(lo.max(-1.0), hi.min(1.0))
}

fn sin(a: &Interval) -> Interval {
    periodic(a, f64::sin, FRAC_PI_2, -FRAC_PI_2, 0.0)
}

fn cos(a: &Interval) -> Interval {
    periodic(a, f64::cos, 0.0, PI, 1.0)
}

fn sqrt(a: &Interval) -> Result<Interval, IntervalError> {
    if a.lo() < 0.0 {
        return Err(IntervalError::Domain { func: "sqrt", lo: a.lo(), hi: a.hi() });
    }
    Interval::checked(super::round::sqrt_dn(a.lo()), super::round::sqrt_up(a.hi()))
}

fn recip(a: &Interval) -> Result<Interval, IntervalError> {
    if a.contains_zero() {
        return Err(IntervalError::Domain {
            func: "reciprocal",
            lo: a.lo(),
            hi: a.hi(),
        });
    }
    Interval::ONE.div(a)
}

fn abs(a: &Interval) -> Interval {
    if a.lo() >= 0.0 {
        *a
    } else if a.hi() <= 0.0 {
        a.neg()
    } else {
        Interval::from_ordered(0.0, (-a.lo()).max(a.hi()))
    }
}

/// Enclosure of `x^n` at a single point, any sign of `x`.
fn powu_point(x: f64, n: u32) -> (f64, f64) {
    let m = x.abs();
    let (dn, up) = (powu_nonneg_dn(m, n), powu_nonneg_up(m, n));
    if x < 0.0 && n % 2 == 1 {
        (-up, -dn)
    } else {
        (dn, up)
    }
}

fn pow_int(a: &Interval, n: i32) -> Result<Interval, IntervalError> {
    if n == 0 {
        return Ok(Interval::ONE);
    }
    if n < 0 {
        let pos = pow_int(a, n.checked_neg().ok_or(IntervalError::Domain {
            func: "pow_int",
            lo: a.lo(),
            hi: a.hi(),
        })?)?;
        return recip(&pos).map_err(|_| IntervalError::Domain {
            func: "pow_int",
            lo: a.lo(),
            hi: a.hi(),
        });
    }
    let n = n as u32;
    if n % 2 == 1 {
        let (lo, _) = powu_point(a.lo(), n);
        let (_, hi) = powu_point(a.hi(), n);
        return Interval::checked(lo, hi);
    }
    // Even power: minimum at the interior zero when the interval straddles it.
    if a.lo() >= 0.0 {
        Interval::checked(powu_point(a.lo(), n).0, powu_point(a.hi(), n).1)
    } else if a.hi() <= 0.0 {
        Interval::checked(powu_point(a.hi(), n).0, powu_point(a.lo(), n).1)
    } else {
        Interval::checked(0.0, powu_point(a.mag(), n).1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn tanh_at_zero_is_exact() {
        assert_eq!(elem_minimal(ElemFn::Tanh, &iv(0.0, 0.0)).unwrap(), iv(0.0, 0.0));
    }

    #[test]
    fn sin_over_full_period() {
        assert_eq!(elem_minimal(ElemFn::Sin, &iv(0.0, TAU)).unwrap(), iv(-1.0, 1.0));
    }

    #[test]
    fn tanh_matches_high_precision_endpoints() {
        // tanh(-0.5) = -0.462117157260009758502318483644...
        // tanh(1.25) =  0.848283639957512897613387646708...
        // Below: the largest double <= tanh(-0.5) and the smallest double
        // >= tanh(1.25), computed with 400-bit mpmath.
        let lo_floor = -0.4621171572600098_f64;
        let hi_ceil = 0.848283639957513_f64;
        let r = elem_minimal(ElemFn::Tanh, &iv(-0.5, 1.25)).unwrap();
        assert!(r.lo() <= lo_floor);
        assert!(r.hi() >= hi_ceil);
        assert!(lo_floor - r.lo() <= 4.0 * f64::EPSILON);
        assert!(r.hi() - hi_ceil <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn even_power_straddling_zero() {
        assert_eq!(elem_minimal(ElemFn::PowInt(2), &iv(-1.0, 2.0)).unwrap(), iv(0.0, 4.0));
        assert_eq!(elem_minimal(ElemFn::PowInt(4), &iv(-3.0, -2.0)).unwrap(), iv(16.0, 81.0));
        assert_eq!(elem_minimal(ElemFn::PowInt(3), &iv(-2.0, 1.0)).unwrap(), iv(-8.0, 1.0));
        assert_eq!(elem_minimal(ElemFn::PowInt(-1), &iv(2.0, 4.0)).unwrap(), iv(0.25, 0.5));
        assert!(elem_minimal(ElemFn::PowInt(-2), &iv(-1.0, 1.0)).is_err());
    }

    #[test]
    fn domain_errors_name_the_function() {
        let e = elem_minimal(ElemFn::Sqrt, &iv(-1.0, 1.0)).unwrap_err();
        assert!(e.to_string().contains("sqrt"));
        let e = elem_minimal(ElemFn::Reciprocal, &iv(-1.0, 1.0)).unwrap_err();
        assert!(e.to_string().contains("reciprocal"));
        assert!(elem_minimal(ElemFn::Exp, &iv(0.0, 1000.0)).is_err());
    }

    #[test]
    fn cos_interior_extrema() {
        let r = elem_minimal(ElemFn::Cos, &iv(-0.5, 0.5)).unwrap();
        assert_eq!(r.hi(), 1.0);
        assert!(r.lo() <= 0.5_f64.cos());
        let r = elem_minimal(ElemFn::Cos, &iv(3.0, 3.5)).unwrap();
        assert_eq!(r.lo(), -1.0);
    }

    #[test]
    fn abs_relu_sigmoid() {
        assert_eq!(elem_minimal(ElemFn::Abs, &iv(-3.0, 2.0)).unwrap(), iv(0.0, 3.0));
        assert_eq!(elem_minimal(ElemFn::Relu, &iv(-3.0, 2.0)).unwrap(), iv(0.0, 2.0));
        let s = elem_minimal(ElemFn::Sigmoid, &iv(-1.0, 1.0)).unwrap();
        assert!(s.contains(ElemFn::Sigmoid.eval(-1.0)) && s.contains(ElemFn::Sigmoid.eval(1.0)));
    }
}
