use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::diff::differentiate;
use super::parse::parse_at;
use super::{Expr, ExprError, IntervalEnv, RealEnv, Var};
use crate::interval::{IntervalMatrix, IntervalVector};

/// On-disk system description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub f: Vec<String>,
}

/// `f(x, u, w)` with one expression per state component.
#[derive(Clone, Debug)]
pub struct VectorField {
    n: usize,
    p: usize,
    q: usize,
    components: Vec<Arc<Expr>>,
}

impl VectorField {
    pub fn new(n: usize, p: usize, q: usize, components: Vec<Arc<Expr>>) -> Result<Self, ExprError> {
        if components.len() != n {
            return Err(ExprError::System(format!("expected {n} components, found {}", components.len())));
        }
        for (i, c) in components.iter().enumerate() {
            for v in c.variables() {
                let limit = match v.kind {
                    super::VarKind::State => n,
                    super::VarKind::Input => p,
                    super::VarKind::Disturbance => q,
                };
                if v.index >= limit {
                    return Err(ExprError::System(format!("component {} uses undeclared {v}", i + 1)));
                }
            }
        }
        Ok(VectorField { n, p, q, components })
    }

    /// Parse one expression per component; error lines are component numbers.
    pub fn parse(n: usize, p: usize, q: usize, components: &[impl AsRef<str>]) -> Result<Self, ExprError> {
        if components.len() != n {
            return Err(ExprError::System(format!("expected {n} components, found {}", components.len())));
        }
        let exprs = components
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let s = s.as_ref();
                if s.contains('\n') {
                    return Err(ExprError::System(format!("component {} spans several lines", i + 1)));
                }
                parse_at(s, (n, p, q), i + 1)
            })
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(n, p, q, exprs)
    }

    pub fn from_system(sys: &SystemFile) -> Result<Self, ExprError> {
        VectorField::parse(sys.n, sys.p, sys.q, &sys.f)
    }

    pub fn from_json(text: &str) -> Result<Self, ExprError> {
        let sys: SystemFile = serde_json::from_str(text).map_err(|e| ExprError::System(e.to_string()))?;
        VectorField::from_system(&sys)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExprError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExprError::System(format!("{}: {e}", path.display())))?;
        VectorField::from_json(&text)
    }

    pub fn to_system(&self) -> SystemFile {
        SystemFile {
            n: self.n,
            p: self.p,
            q: self.q,
            f: self.components.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.p, self.q)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn components(&self) -> &[Arc<Expr>] {
        &self.components
    }

    fn check_lengths(&self, x: usize, u: usize, w: usize) -> Result<(), ExprError> {
        if (x, u, w) != (self.n, self.p, self.q) {
            return Err(ExprError::System(format!(
                "argument lengths ({x}, {u}, {w}) do not match dimensions ({}, {}, {})",
                self.n, self.p, self.q
            )));
        }
        Ok(())
    }

    pub fn eval_real(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_lengths(x.len(), u.len(), w.len())?;
        let env = RealEnv { x, u, w };
        self.components.iter().map(|c| c.eval_real(&env)).collect()
    }

    pub fn eval_interval(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<IntervalVector, ExprError> {
        self.check_lengths(x.dim(), u.dim(), w.dim())?;
        let env = IntervalEnv { x: x.as_slice(), u: u.as_slice(), w: w.as_slice() };
        self.components
            .iter()
            .map(|c| c.eval_interval(&env))
            .collect::<Result<Vec<_>, _>>()
            .map(IntervalVector::new)
    }

    pub fn jacobians(&self) -> SymbolicJacobians {
        let block = |m: usize, var: fn(usize) -> Var| -> Vec<Vec<Arc<Expr>>> {
            self.components.iter().map(|c| (0..m).map(|j| differentiate(c, var(j))).collect()).collect()
        };
        SymbolicJacobians { jx: block(self.n, Var::x), ju: block(self.p, Var::u), jw: block(self.q, Var::w) }
    }
}

/// `∂f/∂x`, `∂f/∂u`, `∂f/∂w` as expression matrices.
#[derive(Clone, Debug)]
pub struct SymbolicJacobians {
    pub jx: Vec<Vec<Arc<Expr>>>,
    pub ju: Vec<Vec<Arc<Expr>>>,
    pub jw: Vec<Vec<Arc<Expr>>>,
}

/// Interval enclosures of the three Jacobians over one box.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBounds {
    pub jx: IntervalMatrix,
    pub ju: IntervalMatrix,
    pub jw: IntervalMatrix,
}

fn eval_block_interval(block: &[Vec<Arc<Expr>>], cols: usize, env: &IntervalEnv<'_>) -> Result<IntervalMatrix, ExprError> {
    let mut out = IntervalMatrix::zeros(block.len(), cols);
    for (i, row) in block.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            out.set(i, j, e.eval_interval(env)?);
        }
    }
    Ok(out)
}

fn eval_block_real(block: &[Vec<Arc<Expr>>], cols: usize, env: &RealEnv<'_>) -> Result<DMatrix<f64>, ExprError> {
    let mut out = DMatrix::zeros(block.len(), cols);
    for (i, row) in block.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            out[(i, j)] = e.eval_real(env)?;
        }
    }
    Ok(out)
}

impl SymbolicJacobians {
    fn cols(&self) -> (usize, usize, usize) {
        let first = |b: &Vec<Vec<Arc<Expr>>>| b.first().map_or(0, Vec::len);
        (first(&self.jx), first(&self.ju), first(&self.jw))
    }

    pub fn eval_interval(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<JacobianBounds, ExprError> {
        let env = IntervalEnv { x: x.as_slice(), u: u.as_slice(), w: w.as_slice() };
        let (nx, nu, nw) = self.cols();
        Ok(JacobianBounds {
            jx: eval_block_interval(&self.jx, nx.max(x.dim()), &env)?,
            ju: eval_block_interval(&self.ju, nu.max(u.dim()), &env)?,
            jw: eval_block_interval(&self.jw, nw.max(w.dim()), &env)?,
        })
    }

    pub fn eval_real(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), ExprError> {
        let env = RealEnv { x, u, w };
        let (nx, nu, nw) = self.cols();
        Ok((
            eval_block_real(&self.jx, nx.max(x.len()), &env)?,
            eval_block_real(&self.ju, nu.max(u.len()), &env)?,
            eval_block_real(&self.jw, nw.max(w.len()), &env)?,
        ))
    }
}
