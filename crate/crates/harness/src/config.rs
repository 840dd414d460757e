//! Scenario files: TOML, every table and key checked, defaults resolved
//! before a run so that the manifest records the full setup.

use std::path::PathBuf;
use std::sync::Arc;

use kslab_core::discretization::{build_grid, Geometry, Grid, Resolution};
use kslab_core::experiments::{BlowupTemplate, DataChoice, CRITICAL_MASS};
use kslab_core::model::ModelParams;
use kslab_core::stepper::StepControls;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub geometry: Geometry,
    pub nx: usize,
    /// Defaults to `nx`; ignored by one-dimensional geometries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>, HarnessError> {
        build_grid(self.geometry, Resolution::axes(self.nx, self.ny.unwrap_or(self.nx)))
            .map_err(|e| HarnessError::Config(format!("grid: {e}")))
    }
}

/// Initial data. Masses left out fall back to the top-level `mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Bump {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass: Option<f64>,
        /// Defaults to a quarter of the smallest domain extent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<f64>,
        /// Defaults to the domain center.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
        #[serde(default)]
        v_level: f64,
        #[serde(default)]
        h_level: f64,
        #[serde(default)]
        perturbation: f64,
    },
    Blowup {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass: Option<f64>,
        lambda: f64,
        r: f64,
        r1: f64,
    },
    Constant {
        u: f64,
        #[serde(default)]
        v: f64,
        #[serde(default)]
        h: f64,
    },
    Stationary {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass: Option<f64>,
    },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Bump { mass: None, width: None, center: None, v_level: 0.0, h_level: 0.0, perturbation: 0.0 }
    }
}

impl InitSpec {
    pub fn mass(&self) -> Option<f64> {
        match self {
            InitSpec::Bump { mass, .. } | InitSpec::Blowup { mass, .. } | InitSpec::Stationary { mass } => *mass,
            InitSpec::Constant { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "one")]
    pub diagnostics_every: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub track_aux: bool,
    #[serde(default)]
    pub track_energy: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { diagnostics_every: 1, snapshot_times: Vec::new(), track_aux: false, track_energy: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// Absolute masses; defaults to {0.5, 0.8, 1.3, 1.5, 2.0}·8π.
    #[serde(default = "default_scan_masses")]
    pub masses: Vec<f64>,
    #[serde(default)]
    pub data: DataChoice,
    #[serde(default = "default_scan_width")]
    pub bump_width: f64,
    #[serde(default = "default_blowup_template")]
    pub blowup: BlowupTemplate,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            masses: default_scan_masses(),
            data: DataChoice::Auto,
            bump_width: default_scan_width(),
            blowup: default_blowup_template(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

/// Refinement study: every combination of `dt / 2^k` (k < dt_levels) and
/// `nx · 2^j` (j < h_levels), each run to `horizon` with fixed dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_verify_dt")]
    pub dt: f64,
    #[serde(default = "default_dt_levels")]
    pub dt_levels: usize,
    #[serde(default = "default_h_levels")]
    pub h_levels: usize,
    #[serde(default = "default_verify_horizon")]
    pub horizon: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            dt: default_verify_dt(),
            dt_levels: default_dt_levels(),
            h_levels: default_h_levels(),
            horizon: default_verify_horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub initdata: InitSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub controls: StepControls,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub bisect: BisectSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    /// Where artifacts go; the CLI `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Parallel probes for scan and bisect; `KSLAB_WORKERS` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn one() -> usize {
    1
}
fn default_horizon() -> f64 {
    10.0
}
fn default_scan_masses() -> Vec<f64> {
    [0.5, 0.8, 1.3, 1.5, 2.0].iter().map(|r| r * CRITICAL_MASS).collect()
}
fn default_scan_width() -> f64 {
    0.2
}
fn default_blowup_template() -> BlowupTemplate {
    BlowupTemplate { lambda: 32.0, r: 0.4, r1: 0.2 }
}
fn default_verify_dt() -> f64 {
    0.02
}
fn default_dt_levels() -> usize {
    3
}
fn default_h_levels() -> usize {
    2
}
fn default_verify_horizon() -> f64 {
    1.0
}

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "KSLAB_WORKERS";

fn extent(geometry: Geometry) -> (f64, [f64; 2]) {
    match geometry {
        Geometry::Interval { length } => (length, [0.5 * length, 0.0]),
        Geometry::Rectangle { lx, ly } => (lx.min(ly), [0.5 * lx, 0.5 * ly]),
        Geometry::RadialDisk { radius } => (radius, [0.0, 0.0]),
    }
}

/// Parses and validates a scenario, filling every default.
pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let raw: Scenario = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    raw.resolve()
}

impl Scenario {
    /// Fills defaults that depend on other keys and checks every invariant.
    pub fn resolve(mut self) -> Result<Scenario, HarnessError> {
        let cfg = |msg: String| HarnessError::Config(msg);
        if self.grid.ny.is_none() && matches!(self.grid.geometry, Geometry::Rectangle { .. }) {
            self.grid.ny = Some(self.grid.nx);
        }
        self.grid.build()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(cfg(format!("horizon: must be > 0, got {}", self.horizon)));
        }
        if let Some(m) = self.mass {
            if !(m > 0.0 && m.is_finite()) {
                return Err(cfg(format!("mass: must be > 0, got {m}")));
            }
        }
        self.model.validate().map_err(|e| cfg(format!("model: {e}")))?;
        self.controls.validate().map_err(|e| cfg(format!("controls: {e}")))?;
        if self.output.diagnostics_every == 0 {
            return Err(cfg("output.diagnostics_every: must be >= 1".into()));
        }
        if self.output.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(cfg("output.snapshot_times: entries must be finite and >= 0".into()));
        }
        if self.output.track_energy && !self.model.is_energy_regime() {
            return Err(cfg(
                "output.track_energy: requires model.motility = exp and tau = delta = 1".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(cfg("workers: must be >= 1".into()));
        }
        let (ext, center0) = extent(self.grid.geometry);
        let top_mass = self.mass;
        // scan and bisect choose their own masses, so a missing mass is only an error once data are built
        let fill = |m: Option<f64>| m.or(top_mass);
        self.initdata = match self.initdata {
            InitSpec::Bump { mass, width, center, v_level, h_level, perturbation } => InitSpec::Bump {
                mass: fill(mass),
                width: Some(width.unwrap_or(0.25 * ext)),
                center: Some(center.unwrap_or(center0)),
                v_level,
                h_level,
                perturbation,
            },
            InitSpec::Blowup { mass, lambda, r, r1 } => InitSpec::Blowup { mass: fill(mass), lambda, r, r1 },
            InitSpec::Stationary { mass } => InitSpec::Stationary { mass: fill(mass) },
            c @ InitSpec::Constant { .. } => c,
        };
        if self.scan.masses.is_empty() || self.scan.masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(cfg("scan.masses: need at least one positive mass".into()));
        }
        let v = self.verify;
        if !(v.dt > 0.0 && v.horizon > 0.0 && v.dt_levels >= 2 && v.h_levels >= 1) {
            return Err(cfg("verify: need dt > 0, horizon > 0, dt_levels >= 2, h_levels >= 1".into()));
        }
        Ok(self)
    }

    /// SHA-256 over the canonical JSON of everything that affects results
    /// (output location and worker count excluded).
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = None;
        keyed.workers = None;
        let json = serde_json::to_vec(&keyed).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Worker count: environment, then config, then available cores.
    pub fn workers(&self) -> Result<usize, HarnessError> {
        if let Ok(s) = std::env::var(WORKERS_ENV) {
            return match s.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(HarnessError::Config(format!("{WORKERS_ENV}: expected a positive integer, got {s:?}"))),
            };
        }
        Ok(self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
    }
}
