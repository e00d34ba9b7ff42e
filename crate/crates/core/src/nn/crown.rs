//! Same-slope CROWN relaxations.
//!
//! Every neuron `φ` on its pre-activation interval `[l, u]` gets one slope
//! `α` and an intercept interval `[β_lo, β_hi]` with
//! `φ(z) - α z ∈ [β_lo, β_hi]` for all `z ∈ [l, u]`. Because both bounds share
//! the slope, the backward pass can be carried out in interval arithmetic:
//! the network output lies in `Λ x + D` for an interval matrix `Λ` and an
//! interval vector `D`, and the final step moves `Λ` onto its midpoint.

use nalgebra::DMatrix;

use super::{Activation, FeedforwardNetwork, NnError};
use crate::interval::{
    elem_minimal, pos_neg_split, ElemFn, Interval, IntervalError, IntervalMatrix, IntervalVector,
};

/// `α z + β_lo ≤ φ(z) ≤ α z + β_hi` on the neuron's pre-activation interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronRelaxation {
    pub alpha: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
}

/// `C x + d_lo ≤ N(x) ≤ C x + d_hi` for every `x` in `region`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineRelaxation {
    pub c: DMatrix<f64>,
    pub d_lo: Vec<f64>,
    pub d_hi: Vec<f64>,
    pub region: IntervalVector,
}

impl AffineRelaxation {
    pub fn d(&self) -> IntervalVector {
        IntervalVector::from_bounds(&self.d_lo, &self.d_hi).expect("d_lo <= d_hi")
    }

    /// Sound bounds on `C x + [d_lo, d_hi]` at a point.
    pub fn bounds_at(&self, x: &[f64]) -> Result<IntervalVector, NnError> {
        let cx = IntervalMatrix::from_real(&self.c)?.mul_point(x)?;
        Ok(cx.add(&self.d())?)
    }
}

impl NeuronRelaxation {
    pub fn new(act: Activation, z: &Interval) -> Result<Self, IntervalError> {
        match act {
            Activation::Identity => Ok(NeuronRelaxation { alpha: 1.0, beta_lo: 0.0, beta_hi: 0.0 }),
            Activation::Relu => Ok(relu(z)),
            Activation::Tanh => Smooth::Tanh.relax(z),
            Activation::Sigmoid => Smooth::Sigmoid.relax(z),
        }
    }

    fn beta(&self) -> Interval {
        Interval::new(self.beta_lo, self.beta_hi).expect("beta_lo <= beta_hi")
    }
}

fn relu(z: &Interval) -> NeuronRelaxation {
    let (l, u) = (z.lo(), z.hi());
    if l >= 0.0 {
        return NeuronRelaxation { alpha: 1.0, beta_lo: 0.0, beta_hi: 0.0 };
    }
    if u <= 0.0 {
        return NeuronRelaxation { alpha: 0.0, beta_lo: 0.0, beta_hi: 0.0 };
    }
    let alpha = (u / (u - l)).clamp(0.0, 1.0);
    // relu(z) - αz is convex with value 0 at z = 0, so it is bounded below by
    // 0 and above by its larger endpoint value.
    let at_l = Interval::from_ordered(l, l).scale(-alpha).expect("finite");
    let at_u = Interval::from_ordered(u, u).scale(1.0 - alpha).expect("finite");
    NeuronRelaxation { alpha, beta_lo: 0.0, beta_hi: at_l.hi().max(at_u.hi()).max(0.0) }
}

#[derive(Clone, Copy)]
enum Smooth {
    Tanh,
    Sigmoid,
}

const FALLBACK_PIECES: usize = 64;

impl Smooth {
    fn elem(self) -> ElemFn {
        match self {
            Smooth::Tanh => ElemFn::Tanh,
            Smooth::Sigmoid => ElemFn::Sigmoid,
        }
    }

    /// Largest value of the derivative, attained only at 0.
    fn max_slope(self) -> f64 {
        match self {
            Smooth::Tanh => 1.0,
            Smooth::Sigmoid => 0.25,
        }
    }

    fn phi(self, z: &Interval) -> Result<Interval, IntervalError> {
        elem_minimal(self.elem(), z)
    }

    fn dphi_point(self, z: f64) -> Result<Interval, IntervalError> {
        let s = self.phi(&Interval::point(z)?)?;
        let d = match self {
            Smooth::Tanh => Interval::ONE.sub(&elem_minimal(ElemFn::PowInt(2), &s)?)?,
            Smooth::Sigmoid => s.mul(&Interval::ONE.sub(&s)?)?,
        };
        Ok(Interval::from_ordered(d.lo().max(0.0), d.hi().min(self.max_slope())))
    }

    /// Range of the derivative over `j`; it increases up to 0 and decreases after.
    fn dphi_range(self, j: &Interval) -> Result<Interval, IntervalError> {
        let (a, b) = (self.dphi_point(j.lo())?, self.dphi_point(j.hi())?);
        let hi = if j.contains_zero() { self.max_slope() } else { a.hi().max(b.hi()) };
        Ok(Interval::from_ordered(a.lo().min(b.lo()), hi))
    }

    fn g(self, z: &Interval, alpha: f64) -> Result<Interval, IntervalError> {
        self.phi(z)?.sub(&z.scale(alpha)?)
    }

    /// Enclosure of `g = φ - α·id` over `j`, mean-value form intersected with the natural one.
    fn g_over(self, j: &Interval, alpha: f64) -> Result<Interval, IntervalError> {
        let natural = self.g(j, alpha)?;
        let m = j.midpoint();
        let slope = self.dphi_range(j)?.sub(&Interval::point(alpha)?)?;
        let mv = self.g(&Interval::point(m)?, alpha)?.add(&slope.mul(&j.sub(&Interval::point(m)?)?)?)?;
        Ok(natural.intersect(&mv).unwrap_or(natural))
    }

    /// Approximate solutions of `φ'(z) = α`, the negative one first.
    fn critical_points(self, alpha: f64) -> Vec<f64> {
        if alpha <= 0.0 || alpha >= self.max_slope() {
            return vec![];
        }
        let c = match self {
            Smooth::Tanh => (1.0 - alpha).sqrt().atanh(),
            Smooth::Sigmoid => {
                let r = (1.0 - 4.0 * alpha).sqrt();
                ((1.0 + r) / (1.0 - r)).ln()
            }
        };
        if c.is_finite() && c > 0.0 {
            vec![-c, c]
        } else {
            vec![]
        }
    }

    /// A small interval around `c` on which `g'` provably changes sign in the
    /// expected direction, so it contains the true critical point.
    fn certify(self, c: f64, alpha: f64, rising_first: bool) -> Result<Option<Interval>, IntervalError> {
        let mut delta = 1e-9 * (1.0 + c.abs());
        while delta <= 1e-3 * (1.0 + c.abs()) {
            let (a, b) = (c - delta, c + delta);
            let ga = self.dphi_point(a)?.sub(&Interval::point(alpha)?)?;
            let gb = self.dphi_point(b)?.sub(&Interval::point(alpha)?)?;
            let ok = if rising_first { ga.lo() > 0.0 && gb.hi() < 0.0 } else { ga.hi() < 0.0 && gb.lo() > 0.0 };
            if ok {
                return Ok(Some(Interval::from_ordered(a, b)));
            }
            delta *= 16.0;
        }
        Ok(None)
    }

    fn relax(self, z: &Interval) -> Result<NeuronRelaxation, IntervalError> {
        let (l, u) = (z.lo(), z.hi());
        if l == u {
            let alpha = self.dphi_point(l)?.midpoint();
            let g = self.g(z, alpha)?;
            return Ok(NeuronRelaxation { alpha, beta_lo: g.lo(), beta_hi: g.hi() });
        }
        let secant = (self.phi(&Interval::point(u)?)?.midpoint() - self.phi(&Interval::point(l)?)?.midpoint()) / (u - l);
        let alpha = if secant.is_finite() { secant.clamp(0.0, self.max_slope()) } else { 0.0 };

        let mut range = self.g(&Interval::point(l)?, alpha)?.hull(&self.g(&Interval::point(u)?, alpha)?);
        let mut certified = true;
        for (k, c) in self.critical_points(alpha).into_iter().enumerate() {
            // g' is negative, positive, negative around the two critical points
            match self.certify(c, alpha, k == 1)? {
                Some(i) => {
                    if let Some(j) = i.intersect(z) {
                        range = range.hull(&self.g_over(&j, alpha)?);
                    }
                }
                None => certified = false,
            }
        }
        if !certified {
            let step = (u - l) / FALLBACK_PIECES as f64;
            let mut a = l;
            for p in 0..FALLBACK_PIECES {
                let b = if p + 1 == FALLBACK_PIECES { u } else { (l + step * (p + 1) as f64).min(u).max(a) };
                range = range.hull(&self.g_over(&Interval::from_ordered(a, b), alpha)?);
                a = b;
            }
        }
        Ok(NeuronRelaxation { alpha, beta_lo: range.lo(), beta_hi: range.hi() })
    }
}

fn check_region(net: &FeedforwardNetwork, region: &IntervalVector) -> Result<(), NnError> {
    if region.dim() != net.input_dim() {
        return Err(NnError::Shape(format!(
            "region has dimension {}, expected {}",
            region.dim(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// Same-slope CROWN bounds of `net` over `region`, with IBP pre-activation bounds.
pub fn crown_affine_bounds(net: &FeedforwardNetwork, region: &IntervalVector) -> Result<AffineRelaxation, NnError> {
    check_region(net, region)?;
    let pre = net.preactivation_bounds(region)?;
    let p = net.output_dim();
    let mut lambda = IntervalMatrix::identity(p);
    let mut d = IntervalVector::zeros(p);
    for (layer, z) in net.layers().iter().zip(&pre).rev() {
        if layer.activation != Activation::Identity {
            let rel = z
                .iter()
                .map(|zj| NeuronRelaxation::new(layer.activation, zj))
                .collect::<Result<Vec<_>, _>>()?;
            let beta: IntervalVector = rel.iter().map(NeuronRelaxation::beta).collect();
            d = d.add(&lambda.mul_vec(&beta)?)?;
            let alphas: Vec<f64> = rel.iter().map(|r| r.alpha).collect();
            lambda = IntervalMatrix::from_fn(lambda.rows(), lambda.cols(), |i, j| lambda.get(i, j).scale(alphas[j]))?;
        }
        d = d.add(&lambda.mul_point(&layer.bias)?)?;
        lambda = lambda.matmul_real(&layer.weights)?;
    }
    let c = lambda.midpoint();
    let spread = lambda.sub(&IntervalMatrix::from_real(&c)?)?.mul_vec(region)?;
    let d = d.add(&spread)?;
    Ok(AffineRelaxation { c, d_lo: d.lower(), d_hi: d.upper(), region: region.clone() })
}

/// The zero-slope relaxation given by interval bound propagation.
pub fn ibp_relaxation(net: &FeedforwardNetwork, region: &IntervalVector) -> Result<AffineRelaxation, NnError> {
    check_region(net, region)?;
    let out = net.interval_forward(region)?;
    Ok(AffineRelaxation {
        c: DMatrix::zeros(net.output_dim(), net.input_dim()),
        d_lo: out.lower(),
        d_hi: out.upper(),
        region: region.clone(),
    })
}

/// `[C⁺ x_lo + C⁻ x_hi + d_lo, C⁺ x_hi + C⁻ x_lo + d_hi]` for a box inside the relaxation region.
pub fn nn_inclusion(rel: &AffineRelaxation, bx: &IntervalVector) -> Result<IntervalVector, NnError> {
    if !rel.region.contains(bx)? {
        return Err(NnError::Localization { box_: format!("{bx:?}"), region: format!("{:?}", rel.region) });
    }
    let (cp, cm) = pos_neg_split(&rel.c);
    let (lo, hi) = (bx.lower(), bx.upper());
    let p = rel.c.nrows();
    let mut out = Vec::with_capacity(p);
    for i in 0..p {
        let mut below = Interval::point(rel.d_lo[i])?;
        let mut above = Interval::point(rel.d_hi[i])?;
        for j in 0..bx.dim() {
            below = below.add(&Interval::point(lo[j])?.scale(cp[(i, j)])?)?;
            below = below.add(&Interval::point(hi[j])?.scale(cm[(i, j)])?)?;
            above = above.add(&Interval::point(hi[j])?.scale(cp[(i, j)])?)?;
            above = above.add(&Interval::point(lo[j])?.scale(cm[(i, j)])?)?;
        }
        out.push(Interval::new(below.lo(), above.hi())?);
    }
    Ok(IntervalVector::new(out))
}

#[cfg(test)]
mod tests {
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{build_linear_relu_net, Layer};

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize], act: Activation) -> FeedforwardNetwork {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| Layer {
                weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.gen_range(-1.5..1.5)),
                bias: (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                activation: if k + 2 == dims.len() { Activation::Identity } else { act },
            })
            .collect();
        FeedforwardNetwork::new(dims[0], layers).unwrap()
    }

    fn sample_in(rng: &mut ChaCha8Rng, b: &IntervalVector) -> Vec<f64> {
        b.iter().map(|i| if i.is_thin() { i.lo() } else { rng.gen_range(i.lo()..=i.hi()) }).collect()
    }

    fn assert_valid(net: &FeedforwardNetwork, rel: &AffineRelaxation, rng: &mut ChaCha8Rng, samples: usize) {
        for _ in 0..samples {
            let x = sample_in(rng, &rel.region);
            let y = net.forward(&x).unwrap();
            let b = rel.bounds_at(&x).unwrap();
            assert!(b.contains_point(&y), "x = {x:?}, N(x) = {y:?}, bounds = {b:?}");
        }
    }

    #[test]
    fn relu_straddling_neuron() {
        let r = NeuronRelaxation::new(Activation::Relu, &iv(-1.0, 3.0)).unwrap();
        assert_eq!(r.alpha, 0.75);
        assert_eq!(r.beta_lo, 0.0);
        assert_eq!(r.beta_hi, 0.75);
        // dense grid check of both lines
        for k in 0..=4000 {
            let z = -1.0 + 4.0 * k as f64 / 4000.0;
            let v = z.max(0.0);
            assert!(r.alpha * z + r.beta_lo <= v && v <= r.alpha * z + r.beta_hi + 1e-15);
        }
        assert_eq!(NeuronRelaxation::new(Activation::Relu, &iv(0.5, 3.0)).unwrap().alpha, 1.0);
        let dead = NeuronRelaxation::new(Activation::Relu, &iv(-2.0, 0.0)).unwrap();
        assert_eq!((dead.alpha, dead.beta_lo, dead.beta_hi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn smooth_neurons_are_bounded_on_a_grid() {
        for act in [Activation::Tanh, Activation::Sigmoid] {
            for (l, u) in [(-3.0, 2.0), (0.1, 0.4), (-0.4, -0.1), (-1e-7, 1e-7), (-40.0, 35.0), (1.0, 1.0), (-8.0, 8.0)] {
                let r = NeuronRelaxation::new(act, &iv(l, u)).unwrap();
                assert!(r.beta_lo <= r.beta_hi && (0.0..=1.0).contains(&r.alpha));
                for k in 0..=2000 {
                    let z = l + (u - l) * k as f64 / 2000.0;
                    let g = act.eval(z) - r.alpha * z;
                    assert!(g >= r.beta_lo - 1e-15 && g <= r.beta_hi + 1e-15, "{act:?} on [{l}, {u}] at {z}");
                }
            }
        }
    }

    #[test]
    fn tanh_intercepts_are_tight() {
        let r = NeuronRelaxation::new(Activation::Tanh, &iv(-2.0, 2.0)).unwrap();
        let alpha = 2.0f64.tanh() / 2.0;
        assert!((r.alpha - alpha).abs() < 1e-15);
        let c = (1.0 - alpha).sqrt().atanh();
        let g = c.tanh() - alpha * c;
        assert!((r.beta_hi - g).abs() < 1e-12 && (r.beta_lo + g).abs() < 1e-12);
    }

    #[test]
    fn linear_network_is_exact() {
        let net = FeedforwardNetwork::new(
            2,
            vec![
                Layer { weights: dmatrix![1.0, 2.0; -0.5, 0.25; 3.0, 1.0], bias: vec![0.5, -1.0, 0.0], activation: Activation::Identity },
                Layer { weights: dmatrix![1.0, -1.0, 0.5], bias: vec![2.0], activation: Activation::Identity },
            ],
        )
        .unwrap();
        let region = IntervalVector::from_pairs(&[[-1.0, 2.0], [0.5, 3.0]]).unwrap();
        let rel = crown_affine_bounds(&net, &region).unwrap();
        assert_eq!(rel.c, dmatrix![3.0, 2.25]);
        assert_eq!(rel.d_lo, vec![3.5]);
        assert_eq!(rel.d_hi, vec![3.5]);
    }

    #[test]
    fn identity_relaxation_gives_the_box() {
        let rel = AffineRelaxation {
            c: DMatrix::identity(2, 2),
            d_lo: vec![0.0; 2],
            d_hi: vec![0.0; 2],
            region: IntervalVector::from_pairs(&[[-5.0, 5.0], [-5.0, 5.0]]).unwrap(),
        };
        let b = IntervalVector::from_pairs(&[[-1.0, 2.0], [0.5, 0.75]]).unwrap();
        assert_eq!(nn_inclusion(&rel, &b).unwrap(), b);
        let outside = IntervalVector::from_pairs(&[[-6.0, 2.0], [0.5, 0.75]]).unwrap();
        assert!(matches!(nn_inclusion(&rel, &outside), Err(NnError::Localization { .. })));
    }

    #[test]
    fn random_tanh_nets_are_bracketed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let net = random_net(&mut rng, &[2, 8, 2], Activation::Tanh);
            let lo: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..1.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..2.0)).collect();
            let region = IntervalVector::from_bounds(&lo, &hi).unwrap();
            let rel = crown_affine_bounds(&net, &region).unwrap();
            assert_valid(&net, &rel, &mut rng, 2000);
            let ibp = ibp_relaxation(&net, &region).unwrap();
            assert_valid(&net, &ibp, &mut rng, 200);
        }
    }

    #[test]
    fn linear_relu_gain_relaxation() {
        let k = dmatrix![6.0, 7.0];
        let net = build_linear_relu_net(&k);
        let region = IntervalVector::from_pairs(&[[0.1, 0.3], [0.2, 0.5]]).unwrap();
        // both hidden neurons are stable here, so the relaxation is exact
        let rel = crown_affine_bounds(&net, &region).unwrap();
        assert_eq!(rel.c, k);
        assert_eq!((rel.d_lo[0], rel.d_hi[0]), (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let straddle = IntervalVector::from_pairs(&[[-0.3, 0.3], [-0.2, 0.5]]).unwrap();
        let rel = crown_affine_bounds(&net, &straddle).unwrap();
        assert_valid(&net, &rel, &mut rng, 5000);
    }

    #[test]
    fn sigmoid_and_deep_relu_nets_are_bracketed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in [Activation::Sigmoid, Activation::Relu] {
            for _ in 0..10 {
                let net = random_net(&mut rng, &[3, 6, 5, 2], act);
                let region = IntervalVector::from_pairs(&[[-1.0, 0.5], [0.0, 1.0], [-0.25, 0.25]]).unwrap();
                let rel = crown_affine_bounds(&net, &region).unwrap();
                assert_valid(&net, &rel, &mut rng, 2000);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn inclusion_shrinks_with_the_box(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_net(&mut rng, &[2, 5, 2], Activation::Tanh);
            let region = IntervalVector::from_pairs(&[[-1.0, 1.0], [-0.5, 1.5]]).unwrap();
            let rel = crown_affine_bounds(&net, &region).unwrap();
            let (s, t) = (a.min(b), a.max(b));
            let inner = IntervalVector::from_pairs(&[[-1.0 + s, -1.0 + 2.0 * t], [-0.5 + s, -0.5 + 2.0 * t]]).unwrap();
            let outer_out = nn_inclusion(&rel, &region).unwrap();
            let inner_out = nn_inclusion(&rel, &inner).unwrap();
            prop_assert!(outer_out.contains(&inner_out).unwrap());
        }
    }
}
