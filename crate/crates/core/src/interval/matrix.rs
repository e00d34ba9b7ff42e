use nalgebra::DMatrix;

use super::{Interval, IntervalError, IntervalVector};

/// A dense `rows x cols` matrix of intervals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Interval>,
}

fn shape_err(msg: String) -> IntervalError {
    IntervalError::Shape(msg)
}

impl IntervalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntervalMatrix { rows, cols, data: vec![Interval::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntervalMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Interval::ONE;
        }
        m
    }

    pub fn from_fn<F>(rows: usize, cols: usize, mut f: F) -> Result<Self, IntervalError>
    where
        F: FnMut(usize, usize) -> Result<Interval, IntervalError>,
    {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j)?);
            }
        }
        Ok(IntervalMatrix { rows, cols, data })
    }

    /// Degenerate interval matrix of a real matrix.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self, IntervalError> {
        IntervalMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Interval::point(m[(i, j)]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Interval {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Interval) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Interval] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn midpoint(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).midpoint())
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).lo())
    }

    pub fn upper(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).hi())
    }

    pub fn contains_real(&self, m: &DMatrix<f64>) -> bool {
        m.nrows() == self.rows
            && m.ncols() == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j).contains(m[(i, j)])))
    }

    pub fn add(&self, other: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(shape_err(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(IntervalMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> IntervalMatrix {
        IntervalMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(Interval::neg).collect(),
        }
    }

    /// Interval matrix product: entry `(i, j)` is the interval sum of
    /// `A[i, k] * B[k, j]` over `k`.
    pub fn matmul(&self, other: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        if self.cols != other.rows {
            return Err(shape_err(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        IntervalMatrix::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = Interval::ZERO;
            for k in 0..self.cols {
                acc = acc.add(&self.get(i, k).mul(other.get(k, j))?)?;
            }
            Ok(acc)
        })
    }

    /// Product with a real matrix on the right, treated as exact.
    pub fn matmul_real(&self, other: &DMatrix<f64>) -> Result<IntervalMatrix, IntervalError> {
        if self.cols != other.nrows() {
            return Err(shape_err(format!(
                "matmul: {}x{} times {}x{}",
                self.rows,
                self.cols,
                other.nrows(),
                other.ncols()
            )));
        }
        IntervalMatrix::from_fn(self.rows, other.ncols(), |i, j| {
            let mut acc = Interval::ZERO;
            for k in 0..self.cols {
                acc = acc.add(&self.get(i, k).scale(other[(k, j)])?)?;
            }
            Ok(acc)
        })
    }

    pub fn mul_vec(&self, v: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        if self.cols != v.dim() {
            return Err(shape_err(format!(
                "mul_vec: {}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        (0..self.rows)
            .map(|i| {
                let mut acc = Interval::ZERO;
                for (a, b) in self.row(i).iter().zip(v.iter()) {
                    acc = acc.add(&a.mul(b)?)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(IntervalVector::new)
    }

    /// Product with a real point vector treated as exact.
    pub fn mul_point(&self, v: &[f64]) -> Result<IntervalVector, IntervalError> {
        if self.cols != v.len() {
            return Err(shape_err(format!(
                "mul_point: {}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        (0..self.rows)
            .map(|i| {
                let mut acc = Interval::ZERO;
                for (a, &b) in self.row(i).iter().zip(v) {
                    acc = acc.add(&a.scale(b)?)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(IntervalVector::new)
    }

    /// Upper bound on the infinity norm (max absolute row sum).
    pub fn norm_inf_upper(&self) -> Result<f64, IntervalError> {
        let mut best: f64 = 0.0;
        for i in 0..self.rows {
            let mut acc = Interval::ZERO;
            for a in self.row(i) {
                acc = acc.add(&Interval::point(a.mag())?)?;
            }
            best = best.max(acc.hi());
        }
        Ok(best)
    }
}

/// Real matrix times interval vector, the matrix treated as exact.
pub fn real_mul_vec(m: &DMatrix<f64>, v: &IntervalVector) -> Result<IntervalVector, IntervalError> {
    if m.ncols() != v.dim() {
        return Err(shape_err(format!(
            "mul_vec: {}x{} times vector of length {}",
            m.nrows(),
            m.ncols(),
            v.dim()
        )));
    }
    (0..m.nrows())
        .map(|i| {
            let mut acc = Interval::ZERO;
            for (j, b) in v.iter().enumerate() {
                acc = acc.add(&b.scale(m[(i, j)])?)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(IntervalVector::new)
}

/// Split `C` into its nonnegative and nonpositive parts, `C = C⁺ + C⁻`.
pub fn pos_neg_split(c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let plus = c.map(|v| v.max(0.0));
    let minus = c.map(|v| v.min(0.0));
    (plus, minus)
}
