//! Inclusion functions for the closed loop `f^c(x, w) = f(x, N(x), w)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{JacobianBounds, SymbolicJacobians, VectorField};
use crate::interval::{Interval, IntervalMatrix, IntervalVector};
use crate::nn::{crown_affine_bounds, nn_inclusion, AffineRelaxation, FeedforwardNetwork};

/// Dynamics, controller and disturbance set.
#[derive(Clone, Debug)]
pub struct ClosedLoopSystem {
    field: VectorField,
    jacobians: SymbolicJacobians,
    network: FeedforwardNetwork,
    wbox: IntervalVector,
}

impl ClosedLoopSystem {
    pub fn new(field: VectorField, network: FeedforwardNetwork, wbox: IntervalVector) -> Result<Self> {
        let (n, p, q) = field.dims();
        if network.input_dim() != n || network.output_dim() != p {
            return Err(Error::Shape(format!(
                "network maps R^{} to R^{}, the system needs R^{n} to R^{p}",
                network.input_dim(),
                network.output_dim()
            )));
        }
        if wbox.dim() != q {
            return Err(Error::Shape(format!("disturbance box has dimension {}, expected {q}", wbox.dim())));
        }
        let jacobians = field.jacobians();
        Ok(ClosedLoopSystem { field, jacobians, network, wbox })
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn jacobians(&self) -> &SymbolicJacobians {
        &self.jacobians
    }

    pub fn network(&self) -> &FeedforwardNetwork {
        &self.network
    }

    pub fn wbox(&self) -> &IntervalVector {
        &self.wbox
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn with_wbox(&self, wbox: IntervalVector) -> Result<Self> {
        ClosedLoopSystem::new(self.field.clone(), self.network.clone(), wbox)
    }

    /// `f(x, N(x), w)` in floating point.
    pub fn eval(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let u = self.network.forward(x)?;
        Ok(self.field.eval_real(x, &u, w)?)
    }

    /// One classical Runge-Kutta step with `w` held constant.
    pub fn rk4_step(&self, x: &[f64], w: &[f64], h: f64) -> Result<Vec<f64>> {
        rk4(|y| self.eval(y, w), x, h)
    }

    /// Sound enclosure of `f(x, N(x), w)` at a point `x` for all `w` in `w`.
    pub fn eval_enclosure(&self, x: &[f64], w: &IntervalVector) -> Result<IntervalVector> {
        let xb = IntervalVector::point(x)?;
        let u = self.network.interval_forward(&xb)?;
        Ok(self.field.eval_interval(&xb, &u, w)?)
    }
}

/// Which construction produced a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Jacobian,
    Natural,
    /// Jacobian form requested but the Jacobians could not be bounded on the region.
    NaturalFallback,
}

/// An inclusion function valid for boxes inside `region()`.
pub trait LocalizedInclusion: Send + Sync + Sized {
    fn dim(&self) -> usize;
    fn region(&self) -> &IntervalVector;
    fn construction(&self) -> Construction;
    /// Bounds on the vector field over `face` for every admissible disturbance.
    fn eval(&self, face: &IntervalVector) -> Result<IntervalVector>;
    /// The same construction, localized to a smaller region.
    fn localize(&self, region: &IntervalVector) -> Result<Self>;

    fn admits(&self, b: &IntervalVector) -> bool {
        b.dim() == self.dim() && self.region().contains(b).unwrap_or(false)
    }
}

/// `[J_x](box - x̊) + f(x̊)` for `x ↦ f(x, u, w)` with `u`, `w` ranging over boxes.
pub fn jacobian_based(
    field: &VectorField,
    jac: &SymbolicJacobians,
    bx: &IntervalVector,
    center: &[f64],
    ubox: &IntervalVector,
    wbox: &IntervalVector,
) -> Result<IntervalVector> {
    if !bx.contains_point(center) {
        return Err(Error::Localization(format!("center {center:?} is outside the box")));
    }
    let jb = jac.eval_interval(bx, ubox, wbox)?;
    let at_center = field.eval_interval(&IntervalVector::point(center)?, ubox, wbox)?;
    Ok(jb.jx.mul_vec(&bx.sub_point(center)?)?.add(&at_center)?)
}

/// Jacobian bounds and remainder shared by every face inside one region `[z, z̄]`.
#[derive(Clone, Debug)]
pub struct JacobianLocalization {
    pub region: IntervalVector,
    pub jac: JacobianBounds,
    pub remainder: IntervalVector,
    pub x_center: Vec<f64>,
    pub u_center: Vec<f64>,
}

impl JacobianLocalization {
    pub fn new(sys: &ClosedLoopSystem, region: &IntervalVector) -> Result<Self> {
        let rel = crown_affine_bounds(sys.network(), region)?;
        let x_center = region.midpoint();
        let u_center = sys.network().forward(&x_center)?;
        let ubox = nn_inclusion(&rel, region)?.hull(&IntervalVector::point(&u_center)?)?;
        let wbox = sys.wbox();
        let jac = sys.jacobians().eval_interval(region, &ubox, wbox)?;
        let w_center = wbox.midpoint();
        let f_center = sys.field().eval_interval(
            &IntervalVector::point(&x_center)?,
            &IntervalVector::point(&u_center)?,
            &IntervalVector::point(&w_center)?,
        )?;
        // R = -[Jx] x̊ - [Ju] ů + [Jw]([w] - ẘ) + f(x̊, ů, ẘ)
        let remainder = jac
            .jx
            .mul_point(&x_center)?
            .add(&jac.ju.mul_point(&u_center)?)?
            .sub(&jac.jw.mul_vec(&wbox.sub_point(&w_center)?)?)?
            .sub(&f_center)?;
        let remainder = remainder.iter().map(Interval::neg).collect();
        Ok(JacobianLocalization { region: region.clone(), jac, remainder, x_center, u_center })
    }
}

/// `([Jx] + [Ju] C) face + [Ju][d] + R`, the relaxation taken over the face itself.
pub fn closed_loop_jacobian_inclusion(
    loc: &JacobianLocalization,
    rel: &AffineRelaxation,
    face: &IntervalVector,
) -> Result<IntervalVector> {
    if !loc.region.contains(face)? {
        return Err(Error::Localization("face is not inside the Jacobian region".into()));
    }
    if !rel.region.contains(face)? {
        return Err(Error::Localization("face is not inside the relaxation region".into()));
    }
    let g = loc.jac.jx.add(&loc.jac.ju.matmul_real(&rel.c)?)?;
    Ok(g.mul_vec(face)?.add(&loc.jac.ju.mul_vec(&rel.d())?)?.add(&loc.remainder)?)
}

/// `F(box, N(box), [w])` with the network bounded by `rel`.
pub fn natural_with_relaxation(
    sys: &ClosedLoopSystem,
    rel: &AffineRelaxation,
    bx: &IntervalVector,
    wbox: &IntervalVector,
) -> Result<IntervalVector> {
    let u = nn_inclusion(rel, bx)?;
    Ok(sys.field().eval_interval(bx, &u, wbox)?)
}

/// Natural closed-loop inclusion, the network relaxed over the box itself.
pub fn closed_loop_natural_inclusion(
    sys: &ClosedLoopSystem,
    bx: &IntervalVector,
    wbox: &IntervalVector,
) -> Result<IntervalVector> {
    let rel = crown_affine_bounds(sys.network(), bx)?;
    natural_with_relaxation(sys, &rel, bx, wbox)
}

/// Requested construction for [`ClosedLoopInclusion`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jacobian,
    Natural,
}

/// The closed-loop inclusion function localized to a region.
#[derive(Clone, Debug)]
pub struct ClosedLoopInclusion {
    sys: Arc<ClosedLoopSystem>,
    method: Method,
    region: IntervalVector,
    loc: Option<JacobianLocalization>,
}

impl ClosedLoopInclusion {
    pub fn new(sys: Arc<ClosedLoopSystem>, method: Method, region: &IntervalVector) -> Result<Self> {
        if region.dim() != sys.n() {
            return Err(Error::Shape(format!("region has dimension {}, expected {}", region.dim(), sys.n())));
        }
        let loc = match method {
            Method::Jacobian => match JacobianLocalization::new(&sys, region) {
                Ok(l) => Some(l),
                Err(Error::Expr(_)) | Err(Error::Interval(_)) => None,
                Err(e) => return Err(e),
            },
            Method::Natural => None,
        };
        Ok(ClosedLoopInclusion { sys, method, region: region.clone(), loc })
    }

    pub fn system(&self) -> &Arc<ClosedLoopSystem> {
        &self.sys
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn localization(&self) -> Option<&JacobianLocalization> {
        self.loc.as_ref()
    }
}

impl LocalizedInclusion for ClosedLoopInclusion {
    fn dim(&self) -> usize {
        self.sys.n()
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
        let rel = crown_affine_bounds(self.sys.network(), face)?;
        match &self.loc {
            Some(loc) => closed_loop_jacobian_inclusion(loc, &rel, face),
            None => natural_with_relaxation(&self.sys, &rel, face, self.sys.wbox()),
        }
    }

    fn localize(&self, region: &IntervalVector) -> Result<Self> {
        ClosedLoopInclusion::new(self.sys.clone(), self.method, region)
    }
}

/// One classical Runge-Kutta step of `ẋ = f(x)`.
pub fn rk4<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    let k1 = f(x)?;
    let k2 = f(&axpy(h / 2.0, &k1))?;
    let k3 = f(&axpy(h / 2.0, &k2))?;
    let k4 = f(&axpy(h, &k3))?;
    Ok((0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Interval hull of `M · box` for a real matrix `M`.
pub fn linear_image(m: &nalgebra::DMatrix<f64>, bx: &IntervalVector) -> Result<IntervalVector> {
    Ok(IntervalMatrix::from_real(m)?.mul_vec(bx)?)
}

#[cfg(test)]
mod tests {
    use nalgebra::{dmatrix, DMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::build_linear_relu_net;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn linear_system() -> ClosedLoopSystem {
        // A = [[-1, 0.5], [0.2, -1]], B = [0; 1], D = I, K = [-0.5, -1]
        let f = VectorField::parse(2, 1, 2, &["-x1 + 0.5*x2 + w1", "0.25*x1 - x2 + u1 + w2"]).unwrap();
        let net = build_linear_relu_net(&dmatrix![-0.5, -1.0]);
        ClosedLoopSystem::new(f, net, IntervalVector::from_pairs(&[[-0.01, 0.01], [-0.02, 0.0]]).unwrap()).unwrap()
    }

    #[test]
    fn scalar_square_example() {
        let f = VectorField::parse(1, 0, 0, &["x1^2"]).unwrap();
        let j = f.jacobians();
        let e = IntervalVector::zeros(0);
        let r = jacobian_based(&f, &j, &IntervalVector::from_pairs(&[[1.0, 2.0]]).unwrap(), &[1.5], &e, &e).unwrap();
        assert_eq!(r[0], iv(0.25, 4.25));
        assert!(jacobian_based(&f, &j, &IntervalVector::from_pairs(&[[1.0, 2.0]]).unwrap(), &[3.0], &e, &e).is_err());
        let thin = IntervalVector::from_pairs(&[[0.75, 0.75]]).unwrap();
        assert_eq!(jacobian_based(&f, &j, &thin, &[0.75], &e, &e).unwrap()[0], iv(0.5625, 0.5625));
    }

    #[test]
    fn linear_closed_loop_matches_image_hull() {
        let sys = linear_system();
        // box with Kx one-signed so the relaxation is exact
        let bx = IntervalVector::from_pairs(&[[0.5, 1.0], [0.25, 0.5]]).unwrap();
        let loc = JacobianLocalization::new(&sys, &bx).unwrap();
        let rel = crown_affine_bounds(sys.network(), &bx).unwrap();
        let r = closed_loop_jacobian_inclusion(&loc, &rel, &bx).unwrap();
        // (A + BK) box + w
        let acl = dmatrix![-1.0, 0.5; -0.25, -2.0];
        let exact = linear_image(&acl, &bx).unwrap().add(sys.wbox()).unwrap();
        for i in 0..2 {
            assert!((r[i].lo() - exact[i].lo()).abs() <= 1e-14, "{r:?} vs {exact:?}");
            assert!((r[i].hi() - exact[i].hi()).abs() <= 1e-14, "{r:?} vs {exact:?}");
        }
    }

    #[test]
    fn zero_dynamics() {
        let f = VectorField::parse(2, 0, 0, &["0", "0"]).unwrap();
        let sys = Arc::new(ClosedLoopSystem::new(f, FeedforwardNetwork::zero_output(2), IntervalVector::zeros(0)).unwrap());
        let bx = IntervalVector::from_pairs(&[[-1.0, 1.0], [2.0, 3.0]]).unwrap();
        for m in [Method::Jacobian, Method::Natural] {
            let incl = ClosedLoopInclusion::new(sys.clone(), m, &bx).unwrap();
            assert_eq!(incl.eval(&bx).unwrap(), IntervalVector::zeros(2));
        }
    }

    #[test]
    fn natural_with_identity_network() {
        let f = VectorField::parse(2, 2, 0, &["u1", "u2"]).unwrap();
        let net = crate::nn::FeedforwardNetwork::new(
            2,
            vec![crate::nn::Layer {
                weights: DMatrix::identity(2, 2),
                bias: vec![0.0; 2],
                activation: crate::nn::Activation::Identity,
            }],
        )
        .unwrap();
        let sys = ClosedLoopSystem::new(f, net, IntervalVector::zeros(0)).unwrap();
        let bx = IntervalVector::from_pairs(&[[-1.0, 2.0], [0.5, 0.75]]).unwrap();
        assert_eq!(closed_loop_natural_inclusion(&sys, &bx, sys.wbox()).unwrap(), bx);
    }

    #[test]
    fn saturated_axis_contains_samples() {
        let f = VectorField::parse(2, 1, 1, &["x2", "20*tanh(u1/20) + w1"]).unwrap();
        let net = build_linear_relu_net(&dmatrix![-6.0, -7.0]);
        let sys = Arc::new(
            ClosedLoopSystem::new(f, net, IntervalVector::from_pairs(&[[-0.01, 0.01]]).unwrap()).unwrap(),
        );
        let region = IntervalVector::from_pairs(&[[-0.3, 0.2], [-0.1, 0.4]]).unwrap();
        let jac = ClosedLoopInclusion::new(sys.clone(), Method::Jacobian, &region).unwrap();
        assert_eq!(jac.construction(), Construction::Jacobian);
        let nat = ClosedLoopInclusion::new(sys.clone(), Method::Natural, &region).unwrap();
        let rj = jac.eval(&region).unwrap();
        let rn = nat.eval(&region).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-0.3..=0.2), rng.gen_range(-0.1..=0.4)];
            let w = [rng.gen_range(-0.01..=0.01)];
            let v = sys.eval(&x, &w).unwrap();
            assert!(rj.contains_point(&v) && rn.contains_point(&v));
        }
    }

    #[test]
    fn nondifferentiable_field_falls_back() {
        let f = VectorField::parse(1, 0, 0, &["-abs(x1)"]).unwrap();
        let sys = Arc::new(ClosedLoopSystem::new(f, FeedforwardNetwork::zero_output(1), IntervalVector::zeros(0)).unwrap());
        let region = IntervalVector::from_pairs(&[[-1.0, 1.0]]).unwrap();
        let incl = ClosedLoopInclusion::new(sys, Method::Jacobian, &region).unwrap();
        assert_eq!(incl.construction(), Construction::NaturalFallback);
        assert_eq!(incl.eval(&region).unwrap()[0], iv(-1.0, 0.0));
    }
}
