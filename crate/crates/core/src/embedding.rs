//! The embedding system, invariance certificates and nested families.
//!
//! For a box `[x, x̂]` the embedding right-hand side evaluates the inclusion
//! function on the `2n` faces: component `i` of the lower half is the lower
//! bound on the face `x_i = x_i`, component `i` of the upper half the upper
//! bound on the face `x_i = x̂_i`. The box is robustly forward invariant when
//! the lower half is nonnegative and the upper half nonpositive.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inclusion::{Construction, LocalizedInclusion};
use crate::interval::{EmbeddingState, IntervalVector};

pub const DEFAULT_FORWARD_STEP: f64 = 0.1;
pub const DEFAULT_BACKWARD_STEP: f64 = 0.05;
pub const DEFAULT_CONV_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_BACK_STEPS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Invariant,
    Inconclusive,
}

/// Embedding right-hand side split into its lower and upper halves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceRhs {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FaceRhs {
    pub fn se_nonnegative(&self) -> bool {
        self.lower.iter().all(|&v| v >= 0.0) && self.upper.iter().all(|&v| v <= 0.0)
    }

    pub fn max_norm(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The most violated face: `(index, is_upper, value)`.
    pub fn worst_face(&self) -> Option<(usize, bool, f64)> {
        let lo = self.lower.iter().enumerate().map(|(i, &v)| (i, false, v, -v));
        let hi = self.upper.iter().enumerate().map(|(i, &v)| (i, true, v, v));
        lo.chain(hi)
            .filter(|t| t.3 > 0.0)
            .reduce(|best, t| if t.3 > best.3 { t } else { best })
            .map(|(i, up, v, _)| (i, up, v))
    }
}

/// Linear coordinates of a paralleletope certificate: the set is `{ T⁻¹ y : y ∈ box }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub t: Vec<Vec<f64>>,
    pub tinv: Vec<Vec<f64>>,
}

impl TransformRecord {
    pub fn new(t: &DMatrix<f64>, tinv: &DMatrix<f64>) -> Self {
        let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        TransformRecord { t: rows(t), tinv: rows(tinv) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCertificate {
    /// The certified box, in `y` coordinates when `transform` is present.
    #[serde(rename = "box")]
    pub bx: IntervalVector,
    pub rhs: FaceRhs,
    pub verdict: Verdict,
    pub construction: Construction,
    /// Region the inclusion function was localized to.
    pub localization: IntervalVector,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transform: Option<TransformRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
}

impl InvarianceCertificate {
    pub fn is_invariant(&self) -> bool {
        self.verdict == Verdict::Invariant
    }
}

/// The embedding system of a localized inclusion function.
#[derive(Clone, Debug)]
pub struct EmbeddingSystem<I> {
    incl: I,
    transform: Option<TransformRecord>,
}

impl<I: LocalizedInclusion> EmbeddingSystem<I> {
    pub fn new(incl: I) -> Self {
        EmbeddingSystem { incl, transform: None }
    }

    /// Attach transform metadata to the certificates this system produces.
    pub fn with_transform(mut self, t: TransformRecord) -> Self {
        self.transform = Some(t);
        self
    }

    pub fn inclusion(&self) -> &I {
        &self.incl
    }

    pub fn dim(&self) -> usize {
        self.incl.dim()
    }

    pub fn region(&self) -> &IntervalVector {
        self.incl.region()
    }

    /// Face-wise embedding right-hand side. Faces are evaluated in parallel;
    /// the result does not depend on the schedule.
    pub fn embedding_rhs(&self, s: &EmbeddingState) -> Result<FaceRhs> {
        let n = self.dim();
        if s.dim() != n {
            return Err(Error::Shape(format!("state has dimension {}, expected {n}", s.dim())));
        }
        let bx = s.to_box();
        if !self.incl.admits(&bx) {
            return Err(Error::Localization(format!(
                "box {:?} is not inside the region {:?}",
                bx,
                self.incl.region()
            )));
        }
        let values = (0..2 * n)
            .into_par_iter()
            .map(|k| {
                let (i, upper) = (k % n, k >= n);
                let face = if upper { bx.upper_face(i) } else { bx.lower_face(i) };
                let r = self.incl.eval(&face)?;
                Ok(if upper { r[i].hi() } else { r[i].lo() })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (lower, upper) = values.split_at(n);
        Ok(FaceRhs { lower: lower.to_vec(), upper: upper.to_vec() })
    }

    /// One-shot certificate for `bx` with the current localization.
    pub fn check_invariance(&self, bx: &IntervalVector) -> Result<InvarianceCertificate> {
        let rhs = self.embedding_rhs(&EmbeddingState::from_box(bx))?;
        let verdict = if rhs.se_nonnegative() { Verdict::Invariant } else { Verdict::Inconclusive };
        Ok(InvarianceCertificate {
            bx: bx.clone(),
            rhs,
            verdict,
            construction: self.incl.construction(),
            localization: self.incl.region().clone(),
            transform: self.transform.clone(),
            config_hash: None,
        })
    }

    /// The same system localized to the box of `s`.
    pub fn refine_localization(&self, s: &EmbeddingState) -> Result<Self> {
        Ok(EmbeddingSystem { incl: self.incl.localize(&s.to_box())?, transform: self.transform.clone() })
    }

    fn certify_refined(&self, s: &EmbeddingState) -> Result<(Self, InvarianceCertificate)> {
        let es = self.refine_localization(s)?;
        let cert = es.check_invariance(&s.to_box())?;
        Ok((es, cert))
    }

    /// Forward Euler on the embedding system with the localization refined
    /// to the current box at every step. Every emitted box is re-certified.
    pub fn integrate_forward(&self, s0: &EmbeddingState, opts: &ForwardOptions) -> Result<NestedFamily> {
        let (_, cert0) = self.certify_refined(s0)?;
        if !cert0.is_invariant() {
            return Err(Error::Refused("the initial box is not certified invariant".into()));
        }
        let mut fam = NestedFamily::default();
        fam.members.push(FamilyMember::from_cert(0.0, s0.clone(), &cert0));
        let mut state = s0.clone();
        let mut rhs = cert0.rhs;
        for k in 1..=opts.max_steps {
            if rhs.max_norm() < opts.conv_tol {
                fam.converged = true;
                fam.equilibrium = Some(state);
                fam.stop = StopReason::Converged;
                return Ok(fam);
            }
            let lower: Vec<f64> = state.lower().iter().zip(&rhs.lower).map(|(x, r)| x + opts.h * r).collect();
            let upper: Vec<f64> = state.upper().iter().zip(&rhs.upper).map(|(x, r)| x + opts.h * r).collect();
            let next = match EmbeddingState::new(lower, upper) {
                Ok(next) if state.se_leq(&next)? => next,
                _ => {
                    fam.stop = StopReason::MonotonicityViolation;
                    fam.diagnostic = Some(format!("step {k}: Euler update left the nested order; reduce the step size"));
                    return Ok(fam);
                }
            };
            let t = k as f64 * opts.h;
            let (_, cert) = self.certify_refined(&next)?;
            let certified = cert.is_invariant();
            fam.members.push(FamilyMember::from_cert(t, next.clone(), &cert));
            if !certified {
                fam.stop = StopReason::CertificateLost;
                fam.diagnostic = Some(format!("step {k}: box at t = {t} is not certified"));
                return Ok(fam);
            }
            state = next;
            rhs = cert.rhs;
        }
        if rhs.max_norm() < opts.conv_tol {
            fam.converged = true;
            fam.equilibrium = Some(state);
            fam.stop = StopReason::Converged;
        } else {
            fam.stop = StopReason::MaxSteps;
        }
        Ok(fam)
    }

    /// Backward Euler in time (negated right-hand side) while the boxes stay
    /// certified and inside `region`. Members carry negative times and
    /// exclude `s0` itself.
    pub fn integrate_backward(&self, s0: &EmbeddingState, opts: &BackwardOptions, region: &IntervalVector) -> Result<NestedFamily> {
        let mut fam = NestedFamily { stop: StopReason::MaxSteps, ..Default::default() };
        let (_, cert0) = self.certify_refined(s0)?;
        if !cert0.is_invariant() {
            fam.stop = StopReason::CertificateLost;
            return Ok(fam);
        }
        let mut state = s0.clone();
        let mut rhs = cert0.rhs;
        let mut retained = Vec::new();
        for k in 1..=opts.max_steps {
            let lower: Vec<f64> = state.lower().iter().zip(&rhs.lower).map(|(x, r)| x - opts.h * r).collect();
            let upper: Vec<f64> = state.upper().iter().zip(&rhs.upper).map(|(x, r)| x - opts.h * r).collect();
            let next = EmbeddingState::new(lower, upper)?;
            if !region.contains(&next.to_box())? {
                fam.stop = StopReason::LeftRegion;
                break;
            }
            if next == state {
                fam.stop = StopReason::Converged;
                break;
            }
            let (_, cert) = self.certify_refined(&next)?;
            if !cert.is_invariant() {
                fam.stop = StopReason::CertificateLost;
                break;
            }
            retained.push(FamilyMember::from_cert(-(k as f64) * opts.h, next.clone(), &cert));
            state = next;
            rhs = cert.rhs;
        }
        retained.reverse();
        fam.members = retained;
        Ok(fam)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardOptions {
    pub h: f64,
    pub max_steps: usize,
    pub conv_tol: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { h: DEFAULT_FORWARD_STEP, max_steps: 90, conv_tol: DEFAULT_CONV_TOL }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardOptions {
    pub h: f64,
    pub max_steps: usize,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions { h: DEFAULT_BACKWARD_STEP, max_steps: DEFAULT_MAX_BACK_STEPS }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[default]
    Converged,
    MaxSteps,
    MonotonicityViolation,
    CertificateLost,
    LeftRegion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub t: f64,
    pub state: EmbeddingState,
    pub rhs: FaceRhs,
    pub certified: bool,
    pub construction: Construction,
}

impl FamilyMember {
    fn from_cert(t: f64, state: EmbeddingState, cert: &InvarianceCertificate) -> Self {
        FamilyMember { t, state, rhs: cert.rhs.clone(), certified: cert.is_invariant(), construction: cert.construction }
    }
}

/// Boxes ordered by time; later boxes are nested in earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NestedFamily {
    pub members: Vec<FamilyMember>,
    pub converged: bool,
    pub equilibrium: Option<EmbeddingState>,
    pub stop: StopReason,
    pub diagnostic: Option<String>,
}

impl NestedFamily {
    /// Backward members (negative times) followed by forward members.
    pub fn merge(backward: NestedFamily, forward: NestedFamily) -> NestedFamily {
        let mut members = backward.members;
        members.extend(forward.members);
        NestedFamily { members, ..forward }
    }

    pub fn certified(&self) -> impl Iterator<Item = &FamilyMember> {
        self.members.iter().filter(|m| m.certified)
    }

    /// Every later box is contained in the previous one.
    pub fn is_nested(&self) -> bool {
        self.members.windows(2).all(|w| w[0].state.se_leq(&w[1].state).unwrap_or(false))
    }

    /// The largest certified box, recorded as the region of attraction.
    pub fn region_of_attraction(&self) -> Option<&FamilyMember> {
        self.certified().next()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::expr::VectorField;
    use crate::inclusion::{ClosedLoopInclusion, ClosedLoopSystem, Method};
    use crate::nn::FeedforwardNetwork;

    fn scalar(src: &str, region: [f64; 2]) -> EmbeddingSystem<ClosedLoopInclusion> {
        let f = VectorField::parse(1, 0, 0, &[src]).unwrap();
        let sys = ClosedLoopSystem::new(f, FeedforwardNetwork::zero_output(1), IntervalVector::zeros(0)).unwrap();
        let region = IntervalVector::from_pairs(&[region]).unwrap();
        EmbeddingSystem::new(ClosedLoopInclusion::new(Arc::new(sys), Method::Jacobian, &region).unwrap())
    }

    fn state(lo: f64, hi: f64) -> EmbeddingState {
        EmbeddingState::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn stable_scalar_rhs_and_certificate() {
        let es = scalar("-x1", [-1.0, 1.0]);
        let rhs = es.embedding_rhs(&state(-1.0, 1.0)).unwrap();
        assert_eq!((rhs.lower[0], rhs.upper[0]), (1.0, -1.0));
        let cert = es.check_invariance(&IntervalVector::from_pairs(&[[-1.0, 1.0]]).unwrap()).unwrap();
        assert!(cert.is_invariant());
    }

    #[test]
    fn unstable_scalar_is_inconclusive() {
        let es = scalar("x1", [-1.0, 1.0]);
        let cert = es.check_invariance(&IntervalVector::from_pairs(&[[-1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(cert.rhs.lower[0], -1.0);
        assert_eq!(cert.verdict, Verdict::Inconclusive);
        assert_eq!(cert.rhs.worst_face(), Some((0, false, -1.0)));
    }

    #[test]
    fn box_outside_region_is_rejected() {
        let es = scalar("-x1", [-1.0, 1.0]);
        assert!(matches!(es.embedding_rhs(&state(-2.0, 1.0)), Err(Error::Localization(_))));
    }

    #[test]
    fn forward_family_tracks_the_exponential_envelope() {
        let es = scalar("-x1", [-1.0, 1.0]);
        let opts = ForwardOptions { h: 0.1, max_steps: 1000, conv_tol: 1e-6 };
        let fam = es.integrate_forward(&state(-1.0, 1.0), &opts).unwrap();
        assert!(fam.converged && fam.is_nested());
        let last = fam.members.last().unwrap();
        assert!(last.t < 30.0, "converged at {}", last.t);
        for m in &fam.members {
            let envelope = (-m.t).exp();
            assert!((m.state.upper()[0] - envelope).abs() <= 2.0 * 0.1 * m.t + 1e-15);
            assert!(m.certified);
        }
    }

    #[test]
    fn zero_dynamics_family_is_constant() {
        let es = scalar("0", [-1.0, 1.0]);
        let opts = ForwardOptions { h: 0.1, max_steps: 5, conv_tol: 1e-8 };
        let fam = es.integrate_forward(&state(-0.5, 0.5), &opts).unwrap();
        assert!(fam.converged);
        assert_eq!(fam.members.len(), 1);
        assert_eq!(fam.equilibrium, Some(state(-0.5, 0.5)));
    }

    #[test]
    fn forward_refuses_uncertified_start() {
        let es = scalar("x1", [-1.0, 1.0]);
        assert!(matches!(
            es.integrate_forward(&state(-1.0, 1.0), &ForwardOptions::default()),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn backward_family_grows_until_the_region_boundary() {
        let es = scalar("-x1", [-0.5, 0.5]);
        let region = IntervalVector::from_pairs(&[[-2.0, 2.0]]).unwrap();
        let opts = BackwardOptions { h: 0.05, max_steps: 2000 };
        let fam = es.integrate_backward(&state(-0.5, 0.5), &opts, &region).unwrap();
        assert_eq!(fam.stop, StopReason::LeftRegion);
        assert!(fam.is_nested() && !fam.members.is_empty());
        assert!(fam.members.iter().all(|m| m.certified && m.t < 0.0));
        let first = &fam.members[0];
        assert!(first.state.upper()[0] <= 2.0 && first.state.upper()[0] > 1.8);
        let fwd = es.integrate_forward(&state(-0.5, 0.5), &ForwardOptions::default()).unwrap();
        let merged = NestedFamily::merge(fam, fwd);
        assert!(merged.is_nested());
        assert!(merged.members.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn backward_from_uncertified_start_is_empty() {
        let es = scalar("x1", [-1.0, 1.0]);
        let region = IntervalVector::from_pairs(&[[-2.0, 2.0]]).unwrap();
        let fam = es.integrate_backward(&state(-1.0, 1.0), &BackwardOptions::default(), &region).unwrap();
        assert!(fam.members.is_empty());
    }

    #[test]
    fn backward_from_a_boundary_box_keeps_few_steps() {
        // ẋ = -x^3 + x: [-1, 1] has zero right-hand side on both faces
        let es = scalar("x1 - x1^3", [-1.0, 1.0]);
        let region = IntervalVector::from_pairs(&[[-3.0, 3.0]]).unwrap();
        let fam = es.integrate_backward(&state(-1.0, 1.0), &BackwardOptions::default(), &region).unwrap();
        assert!(fam.members.len() <= 1);
    }

    #[test]
    fn parallel_rhs_is_deterministic() {
        let f = VectorField::parse(3, 0, 0, &["-x1 + 0.1*tanh(x2)", "-2*x2 + 0.3*x3", "-x3 + 0.2*sin(x1)"]).unwrap();
        let sys = ClosedLoopSystem::new(f, FeedforwardNetwork::zero_output(3), IntervalVector::zeros(0)).unwrap();
        let region = IntervalVector::from_pairs(&[[-1.0, 1.0], [-0.5, 0.7], [-0.2, 0.3]]).unwrap();
        let es = EmbeddingSystem::new(ClosedLoopInclusion::new(Arc::new(sys), Method::Jacobian, &region).unwrap());
        let s = EmbeddingState::from_box(&region);
        let first = es.embedding_rhs(&s).unwrap();
        for _ in 0..10 {
            let again = es.embedding_rhs(&s).unwrap();
            assert!(first.lower.iter().zip(&again.lower).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert!(first.upper.iter().zip(&again.upper).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
