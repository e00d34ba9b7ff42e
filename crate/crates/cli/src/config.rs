//! Run configuration: one JSON document naming the system, the network, the
//! disturbance box, the initial set and the numerical schedule.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use invariant_kit::{Method, RoundingMode};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// System JSON, relative to the config file.
    pub system: PathBuf,
    /// Network JSON, relative to the config file. Omit for uncontrolled systems.
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default)]
    pub wbox: Vec<[f64; 2]>,
    #[serde(default = "default_method")]
    pub method: Method,
    pub set: SetSpec,
    #[serde(default)]
    pub family: FamilySettings,
    #[serde(default)]
    pub falsify: FalsifySettings,
    #[serde(default)]
    pub simulate: SimulateSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rounding: RoundingMode,
    /// Coordinate planes for projection polygons, 1-based. Defaults to
    /// consecutive pairs `(1,2), (3,4), ...`.
    #[serde(default)]
    pub projections: Option<Vec<[usize; 2]>>,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_method() -> Method {
    Method::Jacobian
}

/// The initial set.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box {
        #[serde(rename = "box")]
        bx: Vec<[f64; 2]>,
    },
    /// `{ T⁻¹ y : y ∈ ybox }` with `t` given row by row.
    Paralleletope { t: Vec<Vec<f64>>, ybox: Vec<[f64; 2]> },
    /// Eigen-aligned paralleletope around the equilibrium reached from `x0`,
    /// with half-widths `offsets` in transformed coordinates.
    Eigen {
        x0: Vec<f64>,
        offsets: Vec<f64>,
        /// Half-width of the box around the equilibrium used to relax the
        /// network for the linearization.
        #[serde(default = "one")]
        relaxation_radius: f64,
        #[serde(default = "default_horizon")]
        horizon: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_horizon() -> f64 {
    200.0
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySettings {
    pub h_forward: f64,
    pub steps: usize,
    pub h_backward: f64,
    pub backward_steps: usize,
    pub conv_tol: f64,
    /// The backward family stops once a box leaves the initial set scaled
    /// about its centre by this factor.
    pub region_scale: f64,
}

impl Default for FamilySettings {
    fn default() -> Self {
        FamilySettings { h_forward: 0.1, steps: 90, h_backward: 0.05, backward_steps: 2000, conv_tol: 1e-8, region_scale: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FalsifySettings {
    /// Facet samples, spread over all facets.
    pub samples: usize,
    /// Disturbances per facet sample.
    pub w_samples: usize,
}

impl Default for FalsifySettings {
    fn default() -> Self {
        FalsifySettings { samples: 100_000, w_samples: 2 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSettings {
    pub count: usize,
    /// RK4 steps per recording step.
    pub substeps: usize,
    /// Step of the forward family the trajectories are compared against.
    /// Explicit Euler contracts faster than the flow, so a coarse family can
    /// miss trajectories at matched times; defaults to `family.h_forward / 10`.
    pub h: Option<f64>,
    /// Defaults to the span of the forward family, `steps * h_forward`.
    pub horizon: Option<f64>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings { count: 100, substeps: 10, h: None, horizon: None }
    }
}

/// A parsed config with its paths resolved and the content hash of every
/// input file.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub system_path: PathBuf,
    pub network_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    hasher: Sha256,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_slice(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let system_path = base.join(&config.system);
        let network_path = config.network.as_ref().map(|p| base.join(p));
        let out_dir = base.join(config.out.clone().unwrap_or_else(|| PathBuf::from("out")));

        let mut hasher = Sha256::new();
        hasher.update(&text);
        for p in std::iter::once(&system_path).chain(network_path.as_ref()) {
            let bytes = std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
            hasher.update(&bytes);
        }
        check(&config)?;
        Ok(LoadedConfig { config, system_path, network_path, out_dir, hasher })
    }

    /// SHA-256 over the config, system and network files plus the
    /// effective seed and rounding mode.
    pub fn hash(&self, seed: u64, rounding: RoundingMode) -> String {
        let mut h = self.hasher.clone();
        h.update(seed.to_le_bytes());
        h.update(format!("{rounding:?}").as_bytes());
        hex::encode(h.finalize())
    }
}

fn check(c: &RunConfig) -> Result<()> {
    let f = &c.family;
    ensure!(f.h_forward > 0.0 && f.h_backward > 0.0, "family step sizes must be positive");
    ensure!(f.conv_tol >= 0.0, "family.conv_tol must be non-negative");
    ensure!(f.region_scale >= 1.0, "family.region_scale must be at least 1");
    ensure!(c.simulate.h.is_none_or(|h| h > 0.0), "simulate.h must be positive");
    ensure!(c.simulate.horizon.is_none_or(|t| t >= 0.0), "simulate.horizon must be non-negative");
    ensure!(c.falsify.samples > 0 && c.falsify.w_samples > 0, "falsify sample counts must be positive");
    if let SetSpec::Eigen { x0, offsets, relaxation_radius, .. } = &c.set {
        ensure!(x0.len() == offsets.len(), "set.x0 has {} entries but set.offsets has {}", x0.len(), offsets.len());
        ensure!(offsets.iter().all(|o| *o > 0.0), "set.offsets must be positive");
        ensure!(*relaxation_radius > 0.0, "set.relaxation_radius must be positive");
    }
    if let Some(planes) = &c.projections {
        for p in planes {
            if p[0] == 0 || p[1] == 0 || p[0] == p[1] {
                bail!("projection plane {p:?}: coordinates are 1-based and must differ");
            }
        }
    }
    Ok(())
}
