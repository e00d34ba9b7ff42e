//! Brute-force checks that do not share code paths with the certificates:
//! facet sampling of the vector field, grid extrema, and simulated
//! trajectories.
//!
//! Random draws come from a ChaCha generator seeded per `(seed, stream,
//! index)`, so results do not depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inclusion::ClosedLoopSystem;
use crate::interval::{Interval, IntervalVector};
use crate::paralleletope::Paralleletope;

/// Largest number of grid points a grid oracle will visit.
pub const GRID_BUDGET: u64 = 10_000_000;
/// Witnesses kept in a report; the count covers all of them.
pub const MAX_WITNESSES: usize = 256;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for draw `index` of `stream`.
pub fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(stream)) ^ index))
}

/// A point where the vector field certainly leaves the set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub face: usize,
    pub upper: bool,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// Outward facet normal.
    pub normal: Vec<f64>,
    /// Certified lower bound on the outward component of the vector field.
    pub outward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceReport {
    pub face: usize,
    pub upper: bool,
    /// Smallest `-(n · f)` seen on this facet; negative means outward.
    pub worst_inward_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub n_samples: usize,
    pub faces: Vec<FaceReport>,
    pub witness_count: usize,
    pub witnesses: Vec<Witness>,
}

impl BoundaryReport {
    pub fn passed(&self) -> bool {
        self.witness_count == 0
    }

    pub fn worst_margin(&self) -> f64 {
        self.faces.iter().map(|f| f.worst_inward_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Sound lower bound on `normal · f(x, N(x), w)`.
pub fn outward_lower_bound(sys: &ClosedLoopSystem, normal: &[f64], x: &[f64], w: &[f64]) -> Result<f64> {
    let f = sys.eval_enclosure(x, &IntervalVector::point(w)?)?;
    let mut acc = Interval::ZERO;
    for (c, fi) in normal.iter().zip(f.iter()) {
        acc = acc.add(&fi.scale(*c)?)?;
    }
    Ok(acc.lo())
}

/// Re-evaluates a stored witness; `Some(bound)` when it still holds.
pub fn replay_witness(sys: &ClosedLoopSystem, w: &Witness) -> Result<Option<f64>> {
    let bound = outward_lower_bound(sys, &w.normal, &w.x, &w.w)?;
    Ok((bound > 0.0).then_some(bound))
}

/// Additive recurrence with the generalized golden ratio in `d` dimensions.
fn kronecker_alphas(d: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    (1..=d).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect()
}

fn corner(wbox: &IntervalVector, k: usize) -> Vec<f64> {
    wbox.iter().enumerate().map(|(j, iv)| if (k >> (j % 63)) & 1 == 1 { iv.hi() } else { iv.lo() }).collect()
}

fn uniform_in(rng: &mut ChaCha8Rng, bx: &IntervalVector) -> Vec<f64> {
    bx.iter().map(|iv| if iv.is_thin() { iv.lo() } else { rng.gen_range(iv.lo()..=iv.hi()) }).collect()
}

/// Disturbance `j` for a point: corners and uniform draws alternate.
fn disturbance(wbox: &IntervalVector, rng: &mut ChaCha8Rng, j: usize, salt: usize) -> Vec<f64> {
    if j.is_multiple_of(2) {
        let q = wbox.dim().min(63);
        corner(wbox, (j / 2 + salt) % (1usize << q))
    } else {
        uniform_in(rng, wbox)
    }
}

struct Sample {
    facet: usize,
    margin: f64,
    witness: Option<Witness>,
}

fn facet_normal(set: &Paralleletope, i: usize, upper: bool) -> Vec<f64> {
    let s = if upper { 1.0 } else { -1.0 };
    set.t().row(i).iter().map(|v| s * v).collect()
}

fn summarize(n: usize, samples: Vec<Sample>, n_samples: usize) -> BoundaryReport {
    let mut faces: Vec<FaceReport> = (0..2 * n)
        .map(|k| FaceReport { face: k % n, upper: k >= n, worst_inward_margin: f64::INFINITY })
        .collect();
    let mut witnesses = Vec::new();
    let mut witness_count = 0;
    for s in samples {
        let f = &mut faces[s.facet];
        f.worst_inward_margin = f.worst_inward_margin.min(s.margin);
        if let Some(w) = s.witness {
            witness_count += 1;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(w);
            }
        }
    }
    BoundaryReport { n_samples, faces, witness_count, witnesses }
}

fn probe(sys: &ClosedLoopSystem, facet: usize, upper: bool, normal: &[f64], x: Vec<f64>, w: Vec<f64>) -> Result<Sample> {
    let f = sys.eval(&x, &w)?;
    let out: f64 = normal.iter().zip(&f).map(|(a, b)| a * b).sum();
    let witness = if out > 0.0 {
        let bound = outward_lower_bound(sys, normal, &x, &w)?;
        (bound > 0.0).then(|| Witness { face: facet % x.len(), upper, x, w, normal: normal.to_vec(), outward: bound })
    } else {
        None
    };
    Ok(Sample { facet, margin: -out, witness })
}

/// Samples the boundary of `set` and tests whether the closed-loop vector
/// field points outward. Boxes are passed as `Paralleletope::from_box`.
/// `n_samples` facet points are spread over the `2n` facets; each is paired
/// with `w_samples` disturbances.
pub fn boundary_check(
    sys: &ClosedLoopSystem,
    set: &Paralleletope,
    wbox: &IntervalVector,
    n_samples: usize,
    w_samples: usize,
    seed: u64,
) -> Result<BoundaryReport> {
    let n = set.dim();
    if n != sys.n() || wbox.dim() != sys.field().q() {
        return Err(Error::Shape("set or disturbance box does not match the system".into()));
    }
    let per_facet = n_samples.div_ceil(2 * n).max(1);
    let w_samples = w_samples.max(1);
    let alphas = kronecker_alphas(n.saturating_sub(1));
    let shifts: Vec<Vec<f64>> = (0..2 * n)
        .map(|k| {
            let mut rng = sample_rng(seed, 0, k as u64);
            (0..n.saturating_sub(1)).map(|_| rng.gen::<f64>()).collect()
        })
        .collect();
    let ybox = set.ybox();
    let total = 2 * n * per_facet * w_samples;
    let samples = (0..total)
        .into_par_iter()
        .map(|idx| {
            let j = idx % w_samples;
            let p = (idx / w_samples) % per_facet;
            let facet = idx / (w_samples * per_facet);
            let (i, upper) = (facet % n, facet >= n);
            let mut y = Vec::with_capacity(n);
            let mut free = 0;
            for k in 0..n {
                let iv = ybox[k];
                if k == i {
                    y.push(if upper { iv.hi() } else { iv.lo() });
                } else {
                    let u = (shifts[facet][free] + (p as f64 + 1.0) * alphas[free]).fract();
                    free += 1;
                    y.push(iv.lo() + u * (iv.hi() - iv.lo()));
                }
            }
            let x = if set.t().is_identity(0.0) { y } else { (set.tinv() * nalgebra::DVector::from_vec(y)).as_slice().to_vec() };
            let mut rng = sample_rng(seed, 1 + facet as u64, (p * w_samples + j) as u64);
            let w = disturbance(wbox, &mut rng, j, p);
            probe(sys, facet, upper, &facet_normal(set, i, upper), x, w)
        })
        .collect::<Result<Vec<Sample>>>()?;
    Ok(summarize(n, samples, total))
}

fn grid_size(g: usize, dims: usize) -> Result<u64> {
    let mut total: u64 = 1;
    for _ in 0..dims {
        total = total.checked_mul(g as u64 + 1).filter(|&t| t <= GRID_BUDGET).ok_or_else(|| {
            Error::Budget(format!("{} points per axis in {dims} dimensions exceeds {GRID_BUDGET}", g + 1))
        })?;
    }
    Ok(total)
}

/// Coordinates of grid point `idx` with `g` cells per axis. The grid with
/// `2g` cells contains every point of the grid with `g` cells.
fn grid_point(bx: &IntervalVector, g: usize, mut idx: u64) -> Vec<f64> {
    bx.iter()
        .map(|iv| {
            let k = idx % (g as u64 + 1);
            idx /= g as u64 + 1;
            if k as usize == g {
                iv.hi()
            } else {
                iv.lo() + (k as f64 / g as f64) * (iv.hi() - iv.lo())
            }
        })
        .collect()
}

/// Extrema of `f(x, N(x), w)` over a grid on `box × wbox`: an inner
/// approximation of the minimal inclusion.
pub fn grid_minimal_inclusion(sys: &ClosedLoopSystem, bx: &IntervalVector, wbox: &IntervalVector, g: usize) -> Result<IntervalVector> {
    let g = g.max(1);
    let n = bx.dim();
    let joint: IntervalVector = bx.iter().chain(wbox.iter()).copied().collect();
    let total = grid_size(g, joint.dim())?;
    let (lo, hi) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let p = grid_point(&joint, g, idx);
            let f = sys.eval(&p[..n], &p[n..])?;
            Ok::<_, Error>((f.clone(), f))
        })
        .try_reduce(
            || (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]),
            |(alo, ahi), (blo, bhi)| {
                let lo = alo.iter().zip(&blo).map(|(a, b)| a.min(*b)).collect();
                let hi = ahi.iter().zip(&bhi).map(|(a, b)| a.max(*b)).collect();
                Ok((lo, hi))
            },
        )?;
    Ok(IntervalVector::from_bounds(&lo, &hi)?)
}

/// Grid search over the faces of a box for certified outward points.
pub fn grid_face_check(sys: &ClosedLoopSystem, bx: &IntervalVector, wbox: &IntervalVector, g: usize) -> Result<BoundaryReport> {
    let g = g.max(1);
    let n = bx.dim();
    let per_face = grid_size(g, n - 1 + wbox.dim())?;
    let samples = (0..2 * n as u64 * per_face)
        .into_par_iter()
        .map(|idx| {
            let facet = (idx / per_face) as usize;
            let (i, upper) = (facet % n, facet >= n);
            let face = if upper { bx.upper_face(i) } else { bx.lower_face(i) };
            let free: IntervalVector =
                face.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, iv)| *iv).chain(wbox.iter().copied()).collect();
            let p = grid_point(&free, g, idx % per_face);
            let mut x = p[..n - 1].to_vec();
            x.insert(i, face[i].lo());
            let w = p[n - 1..].to_vec();
            let mut normal = vec![0.0; n];
            normal[i] = if upper { 1.0 } else { -1.0 };
            probe(sys, facet, upper, &normal, x, w)
        })
        .collect::<Result<Vec<Sample>>>()?;
    Ok(summarize(n, samples, (2 * n as u64 * per_face) as usize))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States at the bundle's grid times; truncated when divergent.
    pub states: Vec<Vec<f64>>,
    pub divergent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub count: usize,
    pub horizon: f64,
    /// Recording step; the disturbance is redrawn at every recorded time.
    pub h: f64,
    /// RK4 steps per recording step.
    pub substeps: usize,
    pub seed: u64,
}

/// RK4 trajectories from random starts in `set` under piecewise-constant
/// disturbances drawn from `wbox` (a random corner or a uniform point).
pub fn monte_carlo_trajectories(
    sys: &ClosedLoopSystem,
    set: &Paralleletope,
    wbox: &IntervalVector,
    opts: &MonteCarloOptions,
) -> Result<TrajectoryBundle> {
    let steps = (opts.horizon / opts.h).round() as usize;
    let substeps = opts.substeps.max(1);
    let dt = opts.h / substeps as f64;
    let times = (0..=steps).map(|k| k as f64 * opts.h).collect();
    let trajectories = (0..opts.count)
        .into_par_iter()
        .map(|c| {
            let mut rng = sample_rng(opts.seed, 0x7472_616a, c as u64);
            let y = uniform_in(&mut rng, set.ybox());
            let mut x = (set.tinv() * nalgebra::DVector::from_vec(y)).as_slice().to_vec();
            let mut states = vec![x.clone()];
            for _ in 0..steps {
                let w = if rng.gen_bool(0.5) {
                    corner(wbox, rng.gen_range(0..1usize << wbox.dim().min(16)))
                } else {
                    uniform_in(&mut rng, wbox)
                };
                for _ in 0..substeps {
                    x = sys.rk4_step(&x, &w, dt)?;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Ok(Trajectory { states, divergent: true });
                }
                states.push(x.clone());
            }
            Ok(Trajectory { states, divergent: false })
        })
        .collect::<Result<Vec<Trajectory>>>()?;
    Ok(TrajectoryBundle { times, trajectories })
}
