//! Expression language for vector fields `f(x, u, w)`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' '-'? INTEGER)?
//! atom   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'
//! VAR    := ('x' | 'u' | 'w') [1-9][0-9]*
//! FUNC   := tanh | exp | sin | cos | sqrt | abs
//! NUMBER := digits ('.' digits?)? (('e' | 'E') ('+' | '-')? digits)?
//! ```
//!
//! A minus sign directly in front of a numeric literal is folded into the
//! literal, so `-2` is a constant and `-x` is a negation node.

mod diff;
mod eval;
mod field;
mod parse;
mod print;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::interval::IntervalError;

pub use diff::differentiate;
pub use eval::{IntervalEnv, RealEnv};
pub use field::{JacobianBounds, SymbolicJacobians, SystemFile, VectorField};
pub use parse::parse_expr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    State,
    Input,
    Disturbance,
}

impl VarKind {
    pub fn prefix(&self) -> char {
        match self {
            VarKind::State => 'x',
            VarKind::Input => 'u',
            VarKind::Disturbance => 'w',
        }
    }
}

/// A declared symbol; `index` is zero-based, so `x1` is `(State, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn x(index: usize) -> Var {
        Var { kind: VarKind::State, index }
    }

    pub fn u(index: usize) -> Var {
        Var { kind: VarKind::Input, index }
    }

    pub fn w(index: usize) -> Var {
        Var { kind: VarKind::Disturbance, index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.index + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Tanh,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub fn name(&self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "tanh" => UnaryOp::Tanh,
            "exp" => UnaryOp::Exp,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, i32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier '{name}' at line {line}, column {col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("non-integer exponent at line {line}, column {col}; only integer literals are allowed")]
    NonIntegerExponent { line: usize, col: usize },
    #[error("{func} is undefined at {value}")]
    Domain { func: &'static str, value: f64 },
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error("environment is missing {0}")]
    Unbound(Var),
    #[error("invalid system: {0}")]
    System(String),
}

impl Expr {
    pub fn constant(c: f64) -> Arc<Expr> {
        Arc::new(Expr::Const(c))
    }

    pub fn var(v: Var) -> Arc<Expr> {
        Arc::new(Expr::Var(v))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Whether `v` occurs anywhere in the expression.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.depends_on(v),
            Expr::Binary(_, a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    /// All distinct variables in the expression, sorted.
    pub fn variables(&self) -> Vec<Var> {
        fn walk(e: &Expr, out: &mut Vec<Var>) {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => out.push(*v),
                Expr::Unary(_, a) | Expr::Pow(a, _) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }
}
