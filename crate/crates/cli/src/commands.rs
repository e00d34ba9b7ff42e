use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use invariant_kit::oracle::{boundary_check, monte_carlo_trajectories, replay_witness};
use invariant_kit::*;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{FamilySettings, LoadedConfig, SetSpec};
use crate::output::{family_csv, projection_csv, write_json, write_text};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Verify,
    Family,
    Transform,
    Falsify,
    Simulate,
}

#[derive(Clone, Debug)]
pub struct Invocation {
    pub mode: Mode,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub rounding: Option<RoundingMode>,
    /// `falsify` only: re-check the witnesses of an earlier report.
    pub replay: Option<PathBuf>,
}

impl Invocation {
    pub fn new(mode: Mode, config: impl Into<PathBuf>) -> Self {
        Invocation { mode, config: config.into(), seed: None, out: None, rounding: None, replay: None }
    }
}

/// Runs one command, writing its files and a human-readable log.
/// Returns the process exit code.
pub fn execute(inv: &Invocation, log: &mut dyn Write) -> Result<i32> {
    let loaded = LoadedConfig::load(&inv.config)?;
    let seed = inv.seed.unwrap_or(loaded.config.seed);
    let rounding = inv.rounding.unwrap_or(loaded.config.rounding);
    set_rounding_mode(rounding);
    if rounding == RoundingMode::Fast {
        writeln!(log, "warning: fast rounding; results are not machine-sound")?;
    }
    let out_dir = inv.out.clone().unwrap_or_else(|| loaded.out_dir.clone());
    std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let hash = loaded.hash(seed, rounding);

    let start = Instant::now();
    let setup = Setup::new(loaded, log)?;
    writeln!(log, "set prepared in {:.3} s", start.elapsed().as_secs_f64())?;
    let ctx = Run { setup, seed, hash, out_dir };
    match inv.mode {
        Mode::Verify => ctx.verify(inv, log),
        Mode::Family => ctx.family(log),
        Mode::Transform => ctx.transform(log),
        Mode::Falsify => match &inv.replay {
            Some(path) => ctx.replay(path, log),
            None => ctx.falsify(log),
        },
        Mode::Simulate => ctx.simulate(log),
    }
}

/// The initial set, in the coordinates it is certified in.
enum Prepared {
    Box(IntervalVector),
    Ptope { ts: Arc<TransformedSystem>, ptope: Paralleletope },
}

struct Setup {
    loaded: LoadedConfig,
    sys: Arc<ClosedLoopSystem>,
    set: Prepared,
    /// Equilibrium and spectrum, when the set was built from them.
    spectrum: Option<(Vec<f64>, SpectrumReport)>,
}

fn pairs(v: &[[f64; 2]], what: &str) -> Result<IntervalVector> {
    IntervalVector::from_pairs(v).with_context(|| format!("invalid {what}"))
}

fn rows(v: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    ensure!(v.len() == n && v.iter().all(|r| r.len() == n), "set.t must be {n}x{n}");
    Ok(DMatrix::from_row_iterator(n, n, v.iter().flatten().copied()))
}

impl Setup {
    fn new(loaded: LoadedConfig, log: &mut dyn Write) -> Result<Self> {
        let c = &loaded.config;
        let field = VectorField::load(&loaded.system_path)?;
        let n = field.n();
        let net = match &loaded.network_path {
            Some(p) => FeedforwardNetwork::load(p)?,
            None => FeedforwardNetwork::zero_output(n),
        };
        ensure!(
            c.wbox.len() == field.q(),
            "wbox has {} intervals but the system has {} disturbance inputs",
            c.wbox.len(),
            field.q()
        );
        let sys = Arc::new(ClosedLoopSystem::new(field, net, pairs(&c.wbox, "wbox")?)?);
        let mut spectrum = None;
        let set = match &c.set {
            SetSpec::Box { bx } => {
                ensure!(bx.len() == n, "set.box has {} intervals, expected {n}", bx.len());
                Prepared::Box(pairs(bx, "set.box")?)
            }
            SetSpec::Paralleletope { t, ybox } => {
                ensure!(ybox.len() == n, "set.ybox has {} intervals, expected {n}", ybox.len());
                let t = rows(t, n)?;
                let ts = Arc::new(TransformedSystem::new(sys.clone(), &t)?);
                Prepared::Ptope { ts, ptope: Paralleletope::new(t, pairs(ybox, "set.ybox")?)? }
            }
            SetSpec::Eigen { x0, offsets, relaxation_radius, horizon } => {
                ensure!(x0.len() == n, "set.x0 has {} entries, expected {n}", x0.len());
                let x_star = find_equilibrium(&sys, x0, *horizon, 1e-10)?;
                let choice = eigen_transform(&sys, &x_star, *relaxation_radius)?;
                report_spectrum(&choice.report, log)?;
                let ts = Arc::new(TransformedSystem::new(sys.clone(), &choice.t)?);
                let y: Vec<[f64; 2]> = ts.to_y(&x_star).iter().zip(offsets).map(|(c, o)| [c - o, c + o]).collect();
                let ptope = Paralleletope::new(choice.t.clone(), pairs(&y, "offsets")?)?;
                spectrum = Some((x_star, choice.report));
                Prepared::Ptope { ts, ptope }
            }
        };
        Ok(Setup { loaded, sys, set, spectrum })
    }

    fn method(&self) -> Method {
        self.loaded.config.method
    }

    fn initial(&self) -> &IntervalVector {
        match &self.set {
            Prepared::Box(b) => b,
            Prepared::Ptope { ptope, .. } => ptope.ybox(),
        }
    }

    /// The x-space set described by `bx` in the set's coordinates.
    fn x_set(&self, bx: &IntervalVector) -> Result<Paralleletope> {
        Ok(match &self.set {
            Prepared::Box(_) => Paralleletope::from_box(bx.clone()),
            Prepared::Ptope { ptope, .. } => Paralleletope::new(ptope.t().clone(), bx.clone())?,
        })
    }

    /// `x = M y`; the identity for boxes.
    fn to_x_matrix(&self) -> DMatrix<f64> {
        match &self.set {
            Prepared::Box(b) => DMatrix::identity(b.dim(), b.dim()),
            Prepared::Ptope { ptope, .. } => ptope.tinv().clone(),
        }
    }

    fn record(&self) -> TransformRecord {
        match &self.set {
            Prepared::Box(b) => TransformRecord::new(&DMatrix::identity(b.dim(), b.dim()), &DMatrix::identity(b.dim(), b.dim())),
            Prepared::Ptope { ptope, .. } => ptope.record(),
        }
    }

    fn certificate(&self) -> Result<InvarianceCertificate> {
        Ok(match &self.set {
            Prepared::Box(b) => EmbeddingSystem::new(ClosedLoopInclusion::new(self.sys.clone(), self.method(), b)?).check_invariance(b)?,
            Prepared::Ptope { ts, ptope } => check_paralleletope_invariance(ts, ptope, self.method())?,
        })
    }

    fn forward(&self, opts: &ForwardOptions) -> Result<NestedFamily> {
        Ok(match &self.set {
            Prepared::Box(b) => EmbeddingSystem::new(ClosedLoopInclusion::new(self.sys.clone(), self.method(), b)?)
                .integrate_forward(&EmbeddingState::from_box(b), opts)?,
            Prepared::Ptope { ts, ptope } => transformed_embedding(ts, self.method(), ptope.ybox())?
                .integrate_forward(&EmbeddingState::from_box(ptope.ybox()), opts)?,
        })
    }

    fn family(&self) -> Result<NestedFamily> {
        let s = &self.loaded.config.family;
        match &self.set {
            Prepared::Box(b) => grow(&EmbeddingSystem::new(ClosedLoopInclusion::new(self.sys.clone(), self.method(), b)?), b, s),
            Prepared::Ptope { ts, ptope } => grow(&transformed_embedding(ts, self.method(), ptope.ybox())?, ptope.ybox(), s),
        }
    }
}

fn eigen_transform(sys: &ClosedLoopSystem, x_star: &[f64], radius: f64) -> Result<TransformChoice> {
    let region: Vec<[f64; 2]> = x_star.iter().map(|v| [v - radius, v + radius]).collect();
    Ok(choose_transform(sys, x_star, &pairs(&region, "relaxation region")?)?)
}

fn report_spectrum(r: &SpectrumReport, log: &mut dyn Write) -> Result<()> {
    let eig: Vec<String> = r
        .eigenvalues
        .iter()
        .map(|e| if e.im == 0.0 { format!("{:.6}", e.re) } else { format!("{:.6}{:+.6}i", e.re, e.im) })
        .collect();
    writeln!(log, "closed-loop spectrum ({:?}): {}", r.kind, eig.join(", "))?;
    if let Some(w) = &r.warning {
        writeln!(log, "warning: {w}")?;
    }
    if !r.stable {
        writeln!(log, "warning: the linearization is not Hurwitz")?;
    }
    Ok(())
}

/// Forward family to convergence and backward family until the certificate
/// fails or the boxes leave `bx` scaled by `region_scale`.
fn grow<I: LocalizedInclusion>(es: &EmbeddingSystem<I>, bx: &IntervalVector, s: &FamilySettings) -> Result<NestedFamily> {
    let s0 = EmbeddingState::from_box(bx);
    let fwd = es.integrate_forward(&s0, &ForwardOptions { h: s.h_forward, max_steps: s.steps, conv_tol: s.conv_tol })?;
    let mid = bx.midpoint();
    let region: Vec<[f64; 2]> =
        bx.width().iter().zip(&mid).map(|(w, c)| [c - s.region_scale * w / 2.0, c + s.region_scale * w / 2.0]).collect();
    let bwd = es.integrate_backward(&s0, &BackwardOptions { h: s.h_backward, max_steps: s.backward_steps }, &pairs(&region, "backward region")?)?;
    let back_stop = bwd.stop;
    let mut fam = NestedFamily::merge(bwd, fwd);
    let note = format!("backward: {back_stop:?}");
    fam.diagnostic = Some(match fam.diagnostic.take() {
        Some(d) => format!("{d}; {note}"),
        None => note,
    });
    Ok(fam)
}

struct Run {
    setup: Setup,
    seed: u64,
    hash: String,
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct FamilyFile<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    family: &'a NestedFamily,
}

#[derive(Serialize)]
struct FalsifyFile<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    report: &'a BoundaryReport,
}

#[derive(Serialize)]
struct TransformFile<'a> {
    equilibrium: &'a [f64],
    #[serde(flatten)]
    transform: TransformRecord,
    spectrum: &'a SpectrumReport,
}

#[derive(Serialize)]
struct SimulateFile<'a> {
    config_hash: &'a str,
    trajectories: usize,
    divergent: usize,
    escapes: usize,
    first_escape: Option<Escape>,
}

#[derive(Clone, Serialize)]
struct Escape {
    trajectory: usize,
    t: f64,
    x: Vec<f64>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn verify(&self, inv: &Invocation, log: &mut dyn Write) -> Result<i32> {
        let start = Instant::now();
        let mut cert = self.setup.certificate()?;
        let secs = start.elapsed().as_secs_f64();
        cert.config_hash = Some(self.hash.clone());
        write_json(&self.path("certificate.json"), &cert)?;
        writeln!(log, "verdict: {:?} ({:?} inclusion, {secs:.3} s)", cert.verdict, cert.construction)?;
        if cert.is_invariant() {
            return Ok(EXIT_OK);
        }
        if let Some((i, upper, v)) = cert.rhs.worst_face() {
            let side = if upper { "upper" } else { "lower" };
            writeln!(log, "worst face: {side} face {} with bound {v:e}", i + 1)?;
        }
        writeln!(log, "hint: `invariant-kit falsify --config {}` searches for a boundary witness", inv.config.display())?;
        Ok(EXIT_INCONCLUSIVE)
    }

    fn family(&self, log: &mut dyn Write) -> Result<i32> {
        let start = Instant::now();
        let cert = self.setup.certificate()?;
        writeln!(log, "initial certificate: {:?} ({:.3} s)", cert.verdict, start.elapsed().as_secs_f64())?;
        if !cert.is_invariant() {
            writeln!(log, "the initial set is not certified; no family computed")?;
            return Ok(EXIT_INCONCLUSIVE);
        }
        let fam = self.setup.family()?;
        let secs = start.elapsed().as_secs_f64();
        write_text(&self.path("family.csv"), &family_csv(&fam))?;
        write_json(&self.path("family_certificates.json"), &FamilyFile { config_hash: &self.hash, family: &fam })?;
        write_json(&self.path("family_transform.json"), &self.setup.record())?;
        let m = self.setup.to_x_matrix();
        for [a, b] in self.planes() {
            let name = format!("projection_x{}_x{}.csv", a + 1, b + 1);
            write_text(&self.path(&name), &projection_csv(&fam, &m, a, b))?;
        }
        writeln!(
            log,
            "family: {} members, {} certified, nested: {}, stop: {:?}, converged: {} ({secs:.3} s)",
            fam.members.len(),
            fam.certified().count(),
            fam.is_nested(),
            fam.stop,
            fam.converged
        )?;
        if let Some(d) = &fam.diagnostic {
            writeln!(log, "{d}")?;
        }
        if let Some(roa) = fam.region_of_attraction() {
            writeln!(log, "largest certified member at t = {}", roa.t)?;
        }
        Ok(EXIT_OK)
    }

    fn planes(&self) -> Vec<[usize; 2]> {
        let n = self.setup.sys.n();
        match &self.setup.loaded.config.projections {
            Some(p) => p.iter().filter(|[a, b]| *a <= n && *b <= n).map(|[a, b]| [a - 1, b - 1]).collect(),
            None => (0..n / 2).map(|k| [2 * k, 2 * k + 1]).collect(),
        }
    }

    fn transform(&self, log: &mut dyn Write) -> Result<i32> {
        let (x_star, report, t, tinv) = match &self.setup.spectrum {
            Some((x, r)) => {
                let Prepared::Ptope { ptope, .. } = &self.setup.set else { unreachable!() };
                (x.clone(), r.clone(), ptope.t().clone(), ptope.tinv().clone())
            }
            None => {
                let hull = self.setup.x_set(self.setup.initial())?.x_hull()?;
                let x_star = find_equilibrium(&self.setup.sys, &hull.midpoint(), 200.0, 1e-10)?;
                let region = hull.hull(&IntervalVector::point(&x_star)?)?;
                let choice = choose_transform(&self.setup.sys, &x_star, &region)?;
                report_spectrum(&choice.report, log)?;
                (x_star, choice.report, choice.t, choice.tinv)
            }
        };
        writeln!(log, "equilibrium: {x_star:?}")?;
        write_json(
            &self.path("transform.json"),
            &TransformFile { equilibrium: &x_star, transform: TransformRecord::new(&t, &tinv), spectrum: &report },
        )?;
        Ok(if report.stable { EXIT_OK } else { EXIT_INCONCLUSIVE })
    }

    fn falsify(&self, log: &mut dyn Write) -> Result<i32> {
        let f = self.setup.loaded.config.falsify;
        let set = self.setup.x_set(self.setup.initial())?;
        let start = Instant::now();
        let report = boundary_check(&self.setup.sys, &set, self.setup.sys.wbox(), f.samples, f.w_samples, self.seed)?;
        write_json(&self.path("falsify_report.json"), &FalsifyFile { config_hash: &self.hash, report: &report })?;
        writeln!(
            log,
            "boundary check: {} samples, worst inward margin {:e}, {} witnesses ({:.3} s)",
            report.n_samples,
            report.worst_margin(),
            report.witness_count,
            start.elapsed().as_secs_f64()
        )?;
        if let Some(w) = report.witnesses.first() {
            writeln!(log, "witness: x = {:?}, w = {:?}, outward component >= {:e}", w.x, w.w, w.outward)?;
            return Ok(EXIT_VIOLATION);
        }
        Ok(EXIT_OK)
    }

    fn replay(&self, path: &PathBuf, log: &mut dyn Write) -> Result<i32> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let report: BoundaryReport = serde_json::from_str(&text).with_context(|| format!("invalid report {}", path.display()))?;
        let mut confirmed = 0;
        for (k, w) in report.witnesses.iter().enumerate() {
            ensure!(w.x.len() == self.setup.sys.n(), "witness {k} does not match the system dimension");
            match replay_witness(&self.setup.sys, w)? {
                Some(b) => {
                    confirmed += 1;
                    writeln!(log, "witness {k}: confirmed, outward component >= {b:e}")?;
                }
                None => writeln!(log, "witness {k}: not confirmed")?,
            }
        }
        writeln!(log, "{confirmed} of {} witnesses confirmed", report.witnesses.len())?;
        Ok(if confirmed > 0 { EXIT_VIOLATION } else { EXIT_OK })
    }

    fn simulate(&self, log: &mut dyn Write) -> Result<i32> {
        let c = &self.setup.loaded.config;
        let h = c.simulate.h.unwrap_or(c.family.h_forward / 10.0);
        let horizon = c.simulate.horizon.unwrap_or(c.family.h_forward * c.family.steps as f64);
        let steps = (horizon / h).round() as usize;
        let cert = self.setup.certificate()?;
        // Sets the trajectories are checked against, indexed by step; past
        // the last certified member its invariance carries the check.
        let sets: Vec<Paralleletope> = if cert.is_invariant() {
            let fam = self.setup.forward(&ForwardOptions { h, max_steps: steps, conv_tol: c.family.conv_tol })?;
            fam.certified().map(|m| self.setup.x_set(&m.state.to_box())).collect::<Result<_>>()?
        } else {
            writeln!(log, "the initial set is not certified; checking containment in the initial set only")?;
            vec![self.setup.x_set(self.setup.initial())?]
        };
        let opts = MonteCarloOptions { count: c.simulate.count, horizon, h, substeps: c.simulate.substeps, seed: self.seed };
        let bundle = monte_carlo_trajectories(&self.setup.sys, &sets[0], self.setup.sys.wbox(), &opts)?;
        let mut csv = String::from("trajectory,t");
        for i in 1..=self.setup.sys.n() {
            csv.push_str(&format!(",x{i}"));
        }
        csv.push('\n');
        let (mut escapes, mut first) = (0, None);
        for (j, traj) in bundle.trajectories.iter().enumerate() {
            for (k, x) in traj.states.iter().enumerate() {
                csv.push_str(&format!("{j},{}", bundle.times[k]));
                for v in x {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
                if !sets[k.min(sets.len() - 1)].contains(x) {
                    escapes += 1;
                    first.get_or_insert(Escape { trajectory: j, t: bundle.times[k], x: x.clone() });
                }
            }
        }
        let divergent = bundle.trajectories.iter().filter(|t| t.divergent).count();
        write_text(&self.path("trajectories.csv"), &csv)?;
        write_json(
            &self.path("simulate_report.json"),
            &SimulateFile { config_hash: &self.hash, trajectories: bundle.trajectories.len(), divergent, escapes, first_escape: first.clone() },
        )?;
        writeln!(log, "{} trajectories over t = {horizon}: {escapes} escaped samples, {divergent} divergent", bundle.trajectories.len())?;
        if let Some(e) = first {
            writeln!(log, "first escape: trajectory {} at t = {}, x = {:?}", e.trajectory, e.t, e.x)?;
        }
        Ok(if escapes == 0 && divergent == 0 { EXIT_OK } else { EXIT_VIOLATION })
    }
}
