//! Symbolic differentiation.
//!
//! Results share subtrees with the input. Constant subexpressions are
//! folded only when the floating-point operation is exact, so folding never
//! changes the value the interval evaluator sees.

use std::sync::Arc;

use super::{BinaryOp, Expr, UnaryOp, Var};

fn exact_sum(a: f64, b: f64) -> Option<f64> {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s.is_finite() && err == 0.0).then_some(s)
}

fn exact_product(a: f64, b: f64) -> Option<f64> {
    let p = a * b;
    let normal = p == 0.0 && (a == 0.0 || b == 0.0) || p.is_normal();
    (normal && a.mul_add(b, -p) == 0.0).then_some(p)
}

fn exact_quotient(a: f64, b: f64) -> Option<f64> {
    if b == 0.0 {
        return None;
    }
    let q = a / b;
    let normal = q == 0.0 && a == 0.0 || q.is_normal();
    (normal && q.mul_add(b, -a) == 0.0).then_some(q)
}

pub(crate) fn add(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(s) = exact_sum(x, y) {
            return Expr::constant(s);
        }
    }
    Arc::new(Expr::Binary(BinaryOp::Add, a, b))
}

pub(crate) fn sub(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(s) = exact_sum(x, -y) {
            return Expr::constant(s);
        }
    }
    Arc::new(Expr::Binary(BinaryOp::Sub, a, b))
}

pub(crate) fn neg(a: Arc<Expr>) -> Arc<Expr> {
    match a.as_ref() {
        Expr::Const(c) => Expr::constant(-c),
        Expr::Unary(UnaryOp::Neg, inner) => inner.clone(),
        _ => Arc::new(Expr::Unary(UnaryOp::Neg, a)),
    }
}

pub(crate) fn mul(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if a.is_zero() || b.is_zero() {
        return Expr::constant(0.0);
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(p) = exact_product(x, y) {
            return Expr::constant(p);
        }
    }
    Arc::new(Expr::Binary(BinaryOp::Mul, a, b))
}

pub(crate) fn div(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if b.is_one() {
        return a;
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(q) = exact_quotient(x, y) {
            return Expr::constant(q);
        }
    }
    Arc::new(Expr::Binary(BinaryOp::Div, a, b))
}

pub(crate) fn pow(a: Arc<Expr>, n: i32) -> Arc<Expr> {
    match n {
        0 => Expr::constant(1.0),
        1 => a,
        _ => Arc::new(Expr::Pow(a, n)),
    }
}

/// Partial derivative of `e` with respect to `v`.
pub fn differentiate(e: &Arc<Expr>, v: Var) -> Arc<Expr> {
    if !e.depends_on(v) {
        return Expr::constant(0.0);
    }
    match e.as_ref() {
        Expr::Const(_) => Expr::constant(0.0),
        Expr::Var(w) => Expr::constant(if *w == v { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let da = differentiate(a, v);
            let outer = match op {
                UnaryOp::Neg => return neg(da),
                // 1 - tanh(a)^2, reusing the tanh node
                UnaryOp::Tanh => sub(Expr::constant(1.0), pow(e.clone(), 2)),
                UnaryOp::Exp => e.clone(),
                UnaryOp::Sin => Arc::new(Expr::Unary(UnaryOp::Cos, a.clone())),
                UnaryOp::Cos => neg(Arc::new(Expr::Unary(UnaryOp::Sin, a.clone()))),
                UnaryOp::Sqrt => return div(da, mul(Expr::constant(2.0), e.clone())),
                // a/|a|; undefined at zero, which evaluation reports
                UnaryOp::Abs => return div(mul(da, a.clone()), e.clone()),
            };
            mul(outer, da)
        }
        Expr::Binary(op, a, b) => {
            let (da, db) = (differentiate(a, v), differentiate(b, v));
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b.clone()), mul(a.clone(), db)),
                BinaryOp::Div if db.is_zero() => div(da, b.clone()),
                BinaryOp::Div => sub(div(da, b.clone()), div(mul(a.clone(), db), pow(b.clone(), 2))),
            }
        }
        Expr::Pow(a, n) => {
            let da = differentiate(a, v);
            mul(mul(Expr::constant(*n as f64), pow(a.clone(), n - 1)), da)
        }
    }
}
