use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => NEG,
        Expr::Const(_) | Expr::Var(_) => ATOM,
        Expr::Unary(UnaryOp::Neg, _) => NEG,
        Expr::Unary(..) => ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => ADD,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => MUL,
        Expr::Pow(..) => 4,
    }
}

fn write_prec(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let paren = level(e) < min;
    if paren {
        f.write_str("(")?;
    }
    match e {
        Expr::Const(c) => write!(f, "{c}")?,
        Expr::Var(v) => write!(f, "{v}")?,
        Expr::Unary(UnaryOp::Neg, a) => {
            f.write_str("-")?;
            // `-2` would read back as a literal
            let min = if matches!(a.as_ref(), Expr::Const(c) if !c.is_sign_negative()) { ATOM + 1 } else { NEG };
            write_prec(a, min, f)?;
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_prec(a, 0, f)?;
            f.write_str(")")?;
        }
        Expr::Binary(op, a, b) => {
            let (sym, lmin, rmin) = match op {
                BinaryOp::Add => (" + ", ADD, MUL),
                BinaryOp::Sub => (" - ", ADD, MUL),
                BinaryOp::Mul => ("*", MUL, NEG),
                BinaryOp::Div => ("/", MUL, NEG),
            };
            write_prec(a, lmin, f)?;
            f.write_str(sym)?;
            write_prec(b, rmin, f)?;
        }
        Expr::Pow(a, n) => {
            write_prec(a, ATOM, f)?;
            write!(f, "^{n}")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(self, 0, f)
    }
}
