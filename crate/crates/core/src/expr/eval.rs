use crate::interval::{elem_minimal, ElemFn, Interval};

use super::{BinaryOp, Expr, ExprError, UnaryOp, Var, VarKind};

/// Point assignment for `x`, `u`, `w`.
#[derive(Clone, Copy, Debug)]
pub struct RealEnv<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub w: &'a [f64],
}

/// Box assignment for `x`, `u`, `w`.
#[derive(Clone, Copy, Debug)]
pub struct IntervalEnv<'a> {
    pub x: &'a [Interval],
    pub u: &'a [Interval],
    pub w: &'a [Interval],
}

fn lookup<T: Copy>(v: Var, x: &[T], u: &[T], w: &[T]) -> Result<T, ExprError> {
    let slot = match v.kind {
        VarKind::State => x,
        VarKind::Input => u,
        VarKind::Disturbance => w,
    };
    slot.get(v.index).copied().ok_or(ExprError::Unbound(v))
}

fn finite(func: &'static str, value: f64, arg: f64) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ExprError::Domain { func, value: arg })
    }
}

fn elem_of(op: UnaryOp) -> ElemFn {
    match op {
        UnaryOp::Tanh => ElemFn::Tanh,
        UnaryOp::Exp => ElemFn::Exp,
        UnaryOp::Sin => ElemFn::Sin,
        UnaryOp::Cos => ElemFn::Cos,
        UnaryOp::Sqrt => ElemFn::Sqrt,
        UnaryOp::Abs => ElemFn::Abs,
        UnaryOp::Neg => unreachable!("negation is not an elementary function"),
    }
}

impl Expr {
    /// Floating-point value; non-finite intermediate results are domain errors.
    pub fn eval_real(&self, env: &RealEnv<'_>) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => lookup(*v, env.x, env.u, env.w),
            Expr::Unary(UnaryOp::Neg, a) => Ok(-a.eval_real(env)?),
            Expr::Unary(op, a) => {
                let v = a.eval_real(env)?;
                finite(op.name(), elem_of(*op).eval(v), v)
            }
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval_real(env)?, b.eval_real(env)?);
                match op {
                    BinaryOp::Add => finite("addition", x + y, x),
                    BinaryOp::Sub => finite("subtraction", x - y, x),
                    BinaryOp::Mul => finite("multiplication", x * y, x),
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(ExprError::Domain { func: "division", value: y });
                        }
                        finite("division", x / y, y)
                    }
                }
            }
            Expr::Pow(a, n) => {
                let v = a.eval_real(env)?;
                if *n < 0 && v == 0.0 {
                    return Err(ExprError::Domain { func: "pow_int", value: v });
                }
                finite("pow_int", v.powi(*n), v)
            }
        }
    }

    /// Natural inclusion function: every node replaced by its minimal
    /// interval extension.
    pub fn eval_interval(&self, env: &IntervalEnv<'_>) -> Result<Interval, ExprError> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c)?,
            Expr::Var(v) => lookup(*v, env.x, env.u, env.w)?,
            Expr::Unary(UnaryOp::Neg, a) => a.eval_interval(env)?.neg(),
            Expr::Unary(op, a) => elem_minimal(elem_of(*op), &a.eval_interval(env)?)?,
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval_interval(env)?, b.eval_interval(env)?);
                match op {
                    BinaryOp::Add => x.add(&y)?,
                    BinaryOp::Sub => x.sub(&y)?,
                    BinaryOp::Mul => x.mul(&y)?,
                    BinaryOp::Div => x.div(&y)?,
                }
            }
            Expr::Pow(a, n) => elem_minimal(ElemFn::PowInt(*n), &a.eval_interval(env)?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn natural_inclusion_of_x_squared_minus_x() {
        let e = parse_expr("x1^2 - x1", (1, 0, 0)).unwrap();
        let x = [iv(0.0, 1.0)];
        let r = e.eval_interval(&IntervalEnv { x: &x, u: &[], w: &[] }).unwrap();
        assert_eq!(r, iv(-1.0, 1.0));
        // written as a product it is the same conservatism
        let e = parse_expr("x1*x1 - x1", (1, 0, 0)).unwrap();
        assert_eq!(e.eval_interval(&IntervalEnv { x: &x, u: &[], w: &[] }).unwrap(), iv(-1.0, 1.0));
    }

    #[test]
    fn tanh_at_zero() {
        let e = parse_expr("tanh(x1)", (1, 0, 0)).unwrap();
        let x = [iv(0.0, 0.0)];
        assert_eq!(e.eval_interval(&IntervalEnv { x: &x, u: &[], w: &[] }).unwrap(), iv(0.0, 0.0));
    }

    #[test]
    fn domain_errors() {
        let e = parse_expr("sqrt(x1)", (1, 0, 0)).unwrap();
        assert!(e.eval_real(&RealEnv { x: &[-1.0], u: &[], w: &[] }).is_err());
        let x = [iv(-1.0, 1.0)];
        assert!(matches!(
            e.eval_interval(&IntervalEnv { x: &x, u: &[], w: &[] }),
            Err(ExprError::Interval(_))
        ));
        let e = parse_expr("1/x1", (1, 0, 0)).unwrap();
        assert!(e.eval_real(&RealEnv { x: &[0.0], u: &[], w: &[] }).is_err());
    }

    #[test]
    fn unbound_variable() {
        let e = parse_expr("u1", (1, 1, 0)).unwrap();
        assert!(matches!(e.eval_real(&RealEnv { x: &[1.0], u: &[], w: &[] }), Err(ExprError::Unbound(_))));
    }
}
