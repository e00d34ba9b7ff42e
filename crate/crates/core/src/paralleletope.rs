//! Paralleletopes `{ T⁻¹ y : y ∈ [y, ŷ] }` and the `T`-transformed system.
//!
//! The numerical inverse `M ≈ T⁻¹` is authoritative: the certified set is
//! `M · ybox` and the transformed coordinates are `y = M⁻¹ x`. `M⁻¹` is not
//! available in floating point, so the system carries an interval matrix
//! `[T]` that provably encloses it. For `T = I` both are exact.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSystem, InvarianceCertificate, TransformRecord};
use crate::error::{Error, Result};
use crate::inclusion::{
    linear_image, rk4, ClosedLoopSystem, Construction, JacobianLocalization, LocalizedInclusion, Method,
};
use crate::interval::{Interval, IntervalMatrix, IntervalVector};
use crate::nn::{compose_input_transform, crown_affine_bounds, nn_inclusion, FeedforwardNetwork};

/// Largest accepted condition number of `T`.
pub const MAX_CONDITION: f64 = 1e12;
/// Eigen-based transforms worse than this are treated as near-defective.
const EIGEN_CONDITION_LIMIT: f64 = 1e8;
const EQUILIBRIUM_STEP: f64 = 0.01;

fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `(M, cond)` with `M` the numerical inverse of `t`.
fn checked_inverse(t: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = t.nrows();
    if t.ncols() != n {
        return Err(Error::Shape(format!("transform is {}x{}, expected square", n, t.ncols())));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Transform("transform has non-finite entries".into()));
    }
    let m = t.clone().try_inverse().ok_or_else(|| Error::Transform("transform is singular".into()))?;
    let cond = norm_inf(t) * norm_inf(&m);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Transform(format!("condition estimate {cond:e} exceeds {MAX_CONDITION:e}")));
    }
    let residual = (t * &m - DMatrix::identity(n, n)).amax();
    if residual > 1e-10 * cond {
        return Err(Error::Transform(format!("T·T⁻¹ - I has max-norm {residual:e}")));
    }
    Ok((m, cond))
}

/// Interval enclosure of `M⁻¹` around the float matrix `t`.
fn inverse_enclosure(t: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<IntervalMatrix> {
    let n = t.nrows();
    let e = IntervalMatrix::identity(n).sub(&IntervalMatrix::from_real(t)?.matmul_real(m)?)?;
    let e = e.norm_inf_upper()?;
    if e >= 1.0 {
        return Err(Error::Transform(format!("‖I - T·M‖ = {e} is not below 1")));
    }
    let delta = if e == 0.0 {
        0.0
    } else {
        let num = (e * IntervalMatrix::from_real(t)?.norm_inf_upper()?).next_up();
        (num / (1.0 - e).next_down()).next_up()
    };
    Ok(IntervalMatrix::from_fn(n, n, |i, j| {
        let c = t[(i, j)];
        if delta == 0.0 {
            Interval::point(c)
        } else {
            Interval::new((c - delta).next_down(), (c + delta).next_up())
        }
    })?)
}

/// `{ T⁻¹ y : y ∈ ybox }`.
#[derive(Clone, Debug, PartialEq)]
pub struct Paralleletope {
    t: DMatrix<f64>,
    tinv: DMatrix<f64>,
    ybox: IntervalVector,
}

impl Paralleletope {
    pub fn new(t: DMatrix<f64>, ybox: IntervalVector) -> Result<Self> {
        let (tinv, _) = checked_inverse(&t)?;
        if ybox.dim() != t.nrows() {
            return Err(Error::Shape(format!("ybox has dimension {}, expected {}", ybox.dim(), t.nrows())));
        }
        Ok(Paralleletope { t, tinv, ybox })
    }

    /// The axis-aligned box as a paralleletope with `T = I`.
    pub fn from_box(bx: IntervalVector) -> Self {
        let n = bx.dim();
        Paralleletope { t: DMatrix::identity(n, n), tinv: DMatrix::identity(n, n), ybox: bx }
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn tinv(&self) -> &DMatrix<f64> {
        &self.tinv
    }

    pub fn ybox(&self) -> &IntervalVector {
        &self.ybox
    }

    pub fn dim(&self) -> usize {
        self.ybox.dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let y = &self.t * DVector::from_column_slice(x);
        self.ybox.contains_point(y.as_slice())
    }

    /// Sound outer box of the set in `x` coordinates.
    pub fn x_hull(&self) -> Result<IntervalVector> {
        linear_image(&self.tinv, &self.ybox)
    }

    pub fn record(&self) -> TransformRecord {
        TransformRecord::new(&self.t, &self.tinv)
    }
}

/// The closed-loop system in coordinates `y = T x`.
#[derive(Clone, Debug)]
pub struct TransformedSystem {
    sys: Arc<ClosedLoopSystem>,
    t: DMatrix<f64>,
    tinv: DMatrix<f64>,
    t_encl: IntervalMatrix,
    network: FeedforwardNetwork,
}

impl TransformedSystem {
    pub fn new(sys: Arc<ClosedLoopSystem>, t: &DMatrix<f64>) -> Result<Self> {
        if t.nrows() != sys.n() {
            return Err(Error::Shape(format!("transform has {} rows, expected {}", t.nrows(), sys.n())));
        }
        let (tinv, _) = checked_inverse(t)?;
        let t_encl = inverse_enclosure(t, &tinv)?;
        let network = compose_input_transform(sys.network(), &tinv)?;
        Ok(TransformedSystem { sys, t: t.clone(), tinv, t_encl, network })
    }

    pub fn system(&self) -> &Arc<ClosedLoopSystem> {
        &self.sys
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn tinv(&self) -> &DMatrix<f64> {
        &self.tinv
    }

    pub fn t_enclosure(&self) -> &IntervalMatrix {
        &self.t_encl
    }

    /// `N'(y) = N(T⁻¹ y)`.
    pub fn network(&self) -> &FeedforwardNetwork {
        &self.network
    }

    pub fn n(&self) -> usize {
        self.sys.n()
    }

    pub fn to_x(&self, y: &[f64]) -> Vec<f64> {
        (&self.tinv * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    pub fn to_y(&self, x: &[f64]) -> Vec<f64> {
        (&self.t * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    /// `g(y, w) = T f(T⁻¹ y, N'(y), w)` in floating point.
    pub fn eval(&self, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let x = self.to_x(y);
        let u = self.network.forward(y)?;
        let f = self.sys.field().eval_real(&x, &u, w)?;
        Ok(self.to_y(&f))
    }

    pub fn rk4_step(&self, y: &[f64], w: &[f64], h: f64) -> Result<Vec<f64>> {
        rk4(|v| self.eval(v, w), y, h)
    }

    /// Sound outer box of `T⁻¹ · ybox`.
    pub fn x_hull(&self, ybox: &IntervalVector) -> Result<IntervalVector> {
        linear_image(&self.tinv, ybox)
    }

    pub fn record(&self) -> TransformRecord {
        TransformRecord::new(&self.t, &self.tinv)
    }
}

/// `[T]([Jx]T⁻¹ + [Ju]C') face + [T][Ju][d'] + [T]R`, with `(C', d')` the
/// relaxation of `N'` over the face and the Jacobians taken in `x`.
pub fn transformed_inclusion(
    ts: &TransformedSystem,
    loc: &JacobianLocalization,
    face: &IntervalVector,
) -> Result<IntervalVector> {
    let xface = ts.x_hull(face)?;
    if !loc.region.contains(&xface)? {
        return Err(Error::Localization("T⁻¹ face is not inside the Jacobian region".into()));
    }
    let rel = crown_affine_bounds(&ts.network, face)?;
    let jac = &loc.jac;
    let g = ts.t_encl.matmul(&jac.jx.matmul_real(&ts.tinv)?.add(&jac.ju.matmul_real(&rel.c)?)?)?;
    let ud = ts.t_encl.mul_vec(&jac.ju.mul_vec(&rel.d())?)?;
    let r = ts.t_encl.mul_vec(&loc.remainder)?;
    Ok(g.mul_vec(face)?.add(&ud)?.add(&r)?)
}

/// Localized inclusion function of the transformed system. The region is
/// in `y` coordinates; the Jacobians are localized to its `x` hull.
#[derive(Clone, Debug)]
pub struct TransformedInclusion {
    ts: Arc<TransformedSystem>,
    method: Method,
    region: IntervalVector,
    loc: Option<JacobianLocalization>,
}

impl TransformedInclusion {
    pub fn new(ts: Arc<TransformedSystem>, method: Method, region: &IntervalVector) -> Result<Self> {
        if region.dim() != ts.n() {
            return Err(Error::Shape(format!("region has dimension {}, expected {}", region.dim(), ts.n())));
        }
        let loc = match method {
            Method::Jacobian => match JacobianLocalization::new(&ts.sys, &ts.x_hull(region)?) {
                Ok(l) => Some(l),
                Err(Error::Expr(_)) | Err(Error::Interval(_)) => None,
                Err(e) => return Err(e),
            },
            Method::Natural => None,
        };
        Ok(TransformedInclusion { ts, method, region: region.clone(), loc })
    }

    pub fn system(&self) -> &Arc<TransformedSystem> {
        &self.ts
    }
}

impl LocalizedInclusion for TransformedInclusion {
    fn dim(&self) -> usize {
        self.ts.n()
    }

    fn region(&self) -> &IntervalVector {
        &self.region
    }

    fn construction(&self) -> Construction {
        match (self.method, &self.loc) {
            (Method::Jacobian, Some(_)) => Construction::Jacobian,
            (Method::Jacobian, None) => Construction::NaturalFallback,
            (Method::Natural, _) => Construction::Natural,
        }
    }

    fn eval(&self, face: &IntervalVector) -> Result<IntervalVector> {
        if !self.admits(face) {
            return Err(Error::Localization("box is not inside the inclusion region".into()));
        }
        match &self.loc {
            Some(loc) => transformed_inclusion(&self.ts, loc, face),
            None => {
                let rel = crown_affine_bounds(&self.ts.network, face)?;
                let u = nn_inclusion(&rel, face)?;
                let xb = self.ts.x_hull(face)?;
                let f = self.ts.sys.field().eval_interval(&xb, &u, self.ts.sys.wbox())?;
                Ok(self.ts.t_encl.mul_vec(&f)?)
            }
        }
    }

    fn localize(&self, region: &IntervalVector) -> Result<Self> {
        TransformedInclusion::new(self.ts.clone(), self.method, region)
    }
}

/// Embedding system of the transformed inclusion, localized to the y-box.
pub fn transformed_embedding(
    ts: &Arc<TransformedSystem>,
    method: Method,
    region: &IntervalVector,
) -> Result<EmbeddingSystem<TransformedInclusion>> {
    let incl = TransformedInclusion::new(ts.clone(), method, region)?;
    Ok(EmbeddingSystem::new(incl).with_transform(ts.record()))
}

pub fn check_paralleletope_invariance(
    ts: &Arc<TransformedSystem>,
    ptope: &Paralleletope,
    method: Method,
) -> Result<InvarianceCertificate> {
    if ptope.t() != ts.t() {
        return Err(Error::Transform("paralleletope and system use different transforms".into()));
    }
    transformed_embedding(ts, method, ptope.ybox())?.check_invariance(ptope.ybox())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Eigen,
    Schur,
}

/// Eigenvalue `re + i·im`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Eigenvalue>,
    pub stable: bool,
    pub kind: TransformKind,
    pub warning: Option<String>,
    pub a_cl: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformChoice {
    pub t: DMatrix<f64>,
    pub tinv: DMatrix<f64>,
    pub report: SpectrumReport,
}

/// Closed-loop linearization `Jx + Ju C` at `x_star`, `C` from the
/// relaxation of the network over `region`.
pub fn closed_loop_linearization(
    sys: &ClosedLoopSystem,
    x_star: &[f64],
    region: &IntervalVector,
) -> Result<DMatrix<f64>> {
    let rel = crown_affine_bounds(sys.network(), region)?;
    let u = sys.network().forward(x_star)?;
    let w = vec![0.0; sys.field().q()];
    let (jx, ju, _) = sys.jacobians().eval_real(x_star, &u, &w)?;
    Ok(jx + ju * rel.c)
}

/// Real block-diagonalizing transform of the closed-loop linearization.
pub fn choose_transform(sys: &ClosedLoopSystem, x_star: &[f64], region: &IntervalVector) -> Result<TransformChoice> {
    let w = vec![0.0; sys.field().q()];
    let residual = sys.eval(x_star, &w)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > 1e-6 {
        return Err(Error::NotConverged { residual, steps: 0 });
    }
    transform_for_matrix(&closed_loop_linearization(sys, x_star, region)?)
}

/// Rows are left eigenvectors (real parts and imaginary parts for complex
/// pairs), normalized to unit infinity norm, ordered by real part.
pub fn transform_for_matrix(a: &DMatrix<f64>) -> Result<TransformChoice> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::Shape(format!("matrix is {}x{}, expected square", n, a.ncols())));
    }
    let mut eigs: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let eigenvalues: Vec<Eigenvalue> = eigs.iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect();
    let stable = eigs.iter().all(|z| z.re < 0.0);
    let a_cl = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let report = |kind, warning| SpectrumReport { eigenvalues: eigenvalues.clone(), stable, kind, warning, a_cl };

    let eigen = eigen_rows(a, &eigs).and_then(|t| {
        let (tinv, cond) = checked_inverse(&t).ok()?;
        (cond <= EIGEN_CONDITION_LIMIT).then_some((t, tinv))
    });
    if let Some((t, tinv)) = eigen {
        return Ok(TransformChoice { t, tinv, report: report(TransformKind::Eigen, None) });
    }
    let (q, _) = a.clone().schur().unpack();
    let t = normalize_rows(q.transpose());
    let (tinv, _) = checked_inverse(&t)?;
    let warning = "matrix is defective or nearly so; using the real Schur basis".to_string();
    Ok(TransformChoice { t, tinv, report: report(TransformKind::Schur, Some(warning)) })
}

fn normalize_rows(t: DMatrix<f64>) -> DMatrix<f64> {
    let blocks = vec![1; t.nrows()];
    normalize_blocks(t, &blocks)
}

/// Scales each block of rows by one factor so its largest entry is 1; a
/// complex pair keeps its rotation form.
fn normalize_blocks(mut t: DMatrix<f64>, blocks: &[usize]) -> DMatrix<f64> {
    let mut r = 0;
    for &size in blocks {
        let s = t.rows(r, size).amax();
        if s > 0.0 {
            t.rows_mut(r, size).iter_mut().for_each(|v| *v /= s);
        }
        r += size;
    }
    t
}

/// `None` when some eigenvalue has fewer independent eigenvectors than its
/// multiplicity.
fn eigen_rows(a: &DMatrix<f64>, eigs: &[Complex64]) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = norm_inf(a).max(1.0);
    let cluster_tol = 1e-6 * scale;
    let null_tol = 1e-8 * scale;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < eigs.len() {
        let mut j = i + 1;
        while j < eigs.len() && (eigs[j] - eigs[i]).norm() <= cluster_tol {
            j += 1;
        }
        let m = j - i;
        let lambda = eigs[i..j].iter().sum::<Complex64>() / m as f64;
        if lambda.im.abs() <= cluster_tol {
            let shifted = a.transpose() - DMatrix::identity(n, n) * lambda.re;
            let basis = real_null_space(shifted, m, null_tol)?;
            blocks.extend(std::iter::repeat_n(1, basis.len()));
            rows.extend(rref(basis));
        } else if lambda.im > 0.0 {
            let shifted = a.transpose().map(|v| Complex64::new(v, 0.0)) - DMatrix::identity(n, n) * lambda;
            for v in complex_null_space(shifted, m, null_tol)? {
                rows.push(v.iter().map(|z| z.re).collect());
                rows.push(v.iter().map(|z| z.im).collect());
                blocks.push(2);
            }
        }
        i = j;
    }
    if rows.len() != n {
        return None;
    }
    let t = DMatrix::from_row_iterator(n, n, rows.into_iter().flatten());
    // drop round-off left over from the null-space solves
    Some(normalize_blocks(t, &blocks).map(|v| if v.abs() < 1e-12 { 0.0 } else { v }))
}

fn real_null_space(b: DMatrix<f64>, m: usize, tol: f64) -> Option<Vec<Vec<f64>>> {
    let svd = b.svd(false, true);
    let v_t = svd.v_t?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let idx = &idx[..m];
    if idx.iter().any(|&k| svd.singular_values[k] > tol) {
        return None;
    }
    Some(idx.iter().map(|&k| v_t.row(k).iter().copied().collect()).collect())
}

fn complex_null_space(b: DMatrix<Complex64>, m: usize, tol: f64) -> Option<Vec<Vec<Complex64>>> {
    let svd = b.svd(false, true);
    let v_t = svd.v_t?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let idx = &idx[..m];
    if idx.iter().any(|&k| svd.singular_values[k] > tol) {
        return None;
    }
    // rows of V^H are conjugated right singular vectors
    Some(
        idx.iter()
            .map(|&k| {
                let v: Vec<Complex64> = v_t.row(k).iter().map(|z| z.conj()).collect();
                // fix the phase so the largest entry is real and positive
                let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(Complex64::new(1.0, 0.0));
                let phase = big.conj() / big.norm();
                v.into_iter().map(|z| z * phase).collect()
            })
            .collect(),
    )
}

/// Reduced row echelon form with partial pivoting; a canonical basis of
/// the row space.
fn rref(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let (m, n) = (rows.len(), rows.first().map_or(0, Vec::len));
    let mut r = 0;
    for c in 0..n {
        if r == m {
            break;
        }
        let p = (r..m).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs())).expect("nonempty range");
        if rows[p][c].abs() < 1e-9 {
            continue;
        }
        rows.swap(r, p);
        let pivot = rows[r][c];
        rows[r].iter_mut().for_each(|v| *v /= pivot);
        for k in 0..m {
            if k != r {
                let f = rows[k][c];
                if f != 0.0 {
                    let src = rows[r].clone();
                    rows[k].iter_mut().zip(&src).for_each(|(v, s)| *v -= f * s);
                }
            }
        }
        r += 1;
    }
    rows
}

/// Runs `ẋ = f(x, N(x), 0)` with RK4 until the vector field is below `tol`.
pub fn find_equilibrium(sys: &ClosedLoopSystem, x0: &[f64], horizon: f64, tol: f64) -> Result<Vec<f64>> {
    let w = vec![0.0; sys.field().q()];
    let steps = (horizon / EQUILIBRIUM_STEP).ceil() as usize;
    let mut x = x0.to_vec();
    let mut residual = f64::INFINITY;
    for k in 0..=steps {
        residual = sys.eval(&x, &w)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual < tol {
            return Ok(x);
        }
        if k < steps {
            x = sys.rk4_step(&x, &w, EQUILIBRIUM_STEP)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NotConverged { residual: f64::INFINITY, steps: k + 1 });
            }
        }
    }
    Err(Error::NotConverged { residual, steps })
}
