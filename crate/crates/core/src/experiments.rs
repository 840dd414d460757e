//! Scenario-level studies: radial stationary states, the bounded/growing
//! trajectory classifier, the critical-mass scan and bisection, and the
//! suppression comparison.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::discretization::{inverse_helmholtz, Field, Geometry, Grid};
use crate::error::{Error, Result};
use crate::initdata::{self, BlowupFamilyParams, BumpParams};
use crate::model::{ModelParams, MotilitySpec, SourceSpec};
use crate::stepper::{self, RunSpec, State, StepControls};

/// `8π`.
pub const CRITICAL_MASS: f64 = 8.0 * PI;

/// Stationary solution `u_s = h_s = m e^{v_s}/∫e^{v_s}`, `-Δv_s + v_s = u_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryTriple {
    pub u: Field,
    pub v: Field,
    pub h: Field,
    pub mass: f64,
    /// `‖-Δv_s + v_s - m e^{v_s}/∫e^{v_s}‖_∞`.
    pub residual: f64,
    pub iterations: usize,
}

impl StationaryTriple {
    pub fn to_state(&self, t: f64) -> Result<State> {
        State::new(t, self.u.clone(), self.v.clone(), self.h.clone())
    }
}

/// `m e^{v} / ∫e^{v}`, evaluated with the maximum factored out.
fn boltzmann(v: &Field, mass: f64) -> Field {
    let vmax = v.max();
    let e = v.map(|x| (x - vmax).exp());
    let z = e.integrate();
    e.map(|x| mass * x / z)
}

fn stationary_residual(v: &Field, mass: f64) -> f64 {
    let lap = v.laplacian();
    let s = boltzmann(v, mass);
    (0..v.len())
        .map(|i| (-lap.values()[i] + v.values()[i] - s.values()[i]).abs())
        .fold(0.0, f64::max)
}

pub const STATIONARY_TOL: f64 = 1e-8;
pub const STATIONARY_MAX_ITER: usize = 10_000;
const DAMPING: f64 = 0.5;

/// Damped fixed-point solve of `-Δv + v = m e^v/∫e^v` on the disk, from `v ≡ m/|Ω|`.
pub fn stationary_radial(grid: &Arc<Grid>, mass: f64) -> Result<StationaryTriple> {
    if !matches!(grid.geometry(), Geometry::RadialDisk { .. }) {
        return Err(Error::InvalidArgument("stationary_radial needs a radial disk grid".into()));
    }
    if !(mass > 0.0 && mass < CRITICAL_MASS) {
        return Err(Error::InvalidArgument(format!("mass must lie in (0, 8π), got {mass}")));
    }
    let mut v = Field::constant(grid.clone(), mass / grid.measure());
    let mut residual = stationary_residual(&v, mass);
    let mut iterations = 0;
    while residual > STATIONARY_TOL {
        if iterations >= STATIONARY_MAX_ITER {
            return Err(Error::StationaryNonConvergence { iterations, residual });
        }
        let target = inverse_helmholtz(&boltzmann(&v, mass))?;
        v = v.zip_map(&target, |a, b| (1.0 - DAMPING) * a + DAMPING * b);
        residual = stationary_residual(&v, mass);
        iterations += 1;
    }
    let u = boltzmann(&v, mass);
    Ok(StationaryTriple { h: u.clone(), u, v, mass, residual, iterations })
}

/// Outcome label of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Bounded,
    Growing,
    Undecided,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Bounded => "Bounded",
            Label::Growing => "Growing",
            Label::Undecided => "Undecided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVerdict {
    pub label: Label,
    /// Largest `‖u‖_∞` over the series.
    pub peak: f64,
    /// `‖u‖_∞` at the end over its minimum on the final half.
    pub growth_factor: f64,
    /// Least-squares slope of `ln‖u‖_∞` against t on the final half.
    pub trend_slope: f64,
    /// `(max - min)/max` of `‖u‖_∞` on the final quarter.
    pub final_variation: f64,
}

pub const BOUNDED_VARIATION: f64 = 0.02;
pub const BOUNDED_PEAK_RATIO: f64 = 50.0;
pub const GROWING_FACTOR: f64 = 10.0;
const MIN_RECORDS: usize = 8;

/// Heuristic bounded/growing verdict for a `‖u‖_∞` history over horizon `T`.
///
/// The final quarter and final half are the windows `[t_end - T/4, t_end]`
/// and `[t_end - T/2, t_end]`.
pub fn classify(records: &[DiagnosticsRecord], horizon: f64) -> Result<TrajectoryVerdict> {
    if !(horizon > 0.0) {
        return Err(Error::Classifier(format!("horizon must be positive, got {horizon}")));
    }
    if records.len() < MIN_RECORDS {
        return Err(Error::Classifier(format!("need at least {MIN_RECORDS} records, got {}", records.len())));
    }
    let t0 = records[0].t;
    let t_end = records[records.len() - 1].t;
    if t_end - t0 < 0.5 * horizon * (1.0 - 1e-12) {
        return Err(Error::Classifier(format!(
            "series spans {} < T/2 = {}",
            t_end - t0,
            0.5 * horizon
        )));
    }
    if records.iter().any(|r| !(r.u_linf > 0.0 && r.u_linf.is_finite())) {
        return Err(Error::Classifier("series contains a non-positive or non-finite sup norm".into()));
    }
    let initial = records[0].u_linf;
    let peak = records.iter().map(|r| r.u_linf).fold(0.0, f64::max);
    let last = records[records.len() - 1].u_linf;

    let quarter: Vec<f64> =
        records.iter().filter(|r| r.t >= t_end - 0.25 * horizon).map(|r| r.u_linf).collect();
    let qmax = quarter.iter().copied().fold(0.0, f64::max);
    let qmin = quarter.iter().copied().fold(f64::INFINITY, f64::min);
    let final_variation = (qmax - qmin) / qmax;

    let half: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.t >= t_end - 0.5 * horizon).collect();
    let hmin = half.iter().map(|r| r.u_linf).fold(f64::INFINITY, f64::min);
    let growth_factor = last / hmin;
    let trend_slope = if half.len() >= 2 {
        let t: Vec<f64> = half.iter().map(|r| r.t).collect();
        let y: Vec<f64> = half.iter().map(|r| r.u_linf.ln()).collect();
        initdata::ls_slope(&t, &y)
    } else {
        0.0
    };
    let trend_slope = if trend_slope.is_finite() { trend_slope } else { 0.0 };

    let bounded = final_variation < BOUNDED_VARIATION && peak <= BOUNDED_PEAK_RATIO * initial;
    let growing = growth_factor >= GROWING_FACTOR && trend_slope > 0.0;
    let label = if growing {
        Label::Growing
    } else if bounded {
        Label::Bounded
    } else {
        Label::Undecided
    };
    Ok(TrajectoryVerdict { label, peak, growth_factor, trend_slope, final_variation })
}

/// Which initial datum a probe of mass `m` starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataChoice {
    /// Bump below 8π, concentrating family at or above.
    #[default]
    Auto,
    Bump,
    Blowup,
}

/// Mass-independent part of a bump datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpTemplate {
    pub width: f64,
    #[serde(default)]
    pub v_level: f64,
    #[serde(default)]
    pub h_level: f64,
}

/// Mass-independent part of a concentrating datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupTemplate {
    pub lambda: f64,
    pub r: f64,
    pub r1: f64,
}

/// Common setup of scan, bisection and suppression probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeScenario {
    pub grid: Arc<Grid>,
    pub params: ModelParams,
    pub controls: StepControls,
    pub horizon: f64,
    pub diagnostics_every: usize,
    pub bump: BumpTemplate,
    pub blowup: BlowupTemplate,
    pub data: DataChoice,
}

/// One probe: a full run classified over the scenario horizon.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub mass: f64,
    pub verdict: TrajectoryVerdict,
    pub records: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

impl ProbeScenario {
    pub fn initial_state(&self, mass: f64) -> Result<State> {
        let use_bump = match self.data {
            DataChoice::Auto => mass < CRITICAL_MASS,
            DataChoice::Bump => true,
            DataChoice::Blowup => false,
        };
        if use_bump {
            let BumpTemplate { width, v_level, h_level } = self.bump;
            initdata::bump_data(
                &self.grid,
                &BumpParams { center: [0.0, 0.0], width, mass, v_level, h_level, perturbation: 0.0, seed: 0 },
            )
        } else {
            let BlowupTemplate { lambda, r, r1 } = self.blowup;
            Ok(initdata::blowup_data(&self.grid, &BlowupFamilyParams { lambda, r, r1, mass })?.state)
        }
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            controls: self.controls,
            diagnostics_every: self.diagnostics_every,
            ..RunSpec::new(self.params, self.horizon)
        }
    }

    pub fn probe(&self, mass: f64) -> Result<ProbeOutcome> {
        let initial = self.initial_state(mass)?;
        let out = stepper::run(initial, &self.run_spec())?;
        let verdict = classify(&out.records, self.horizon)?;
        Ok(ProbeOutcome { mass, verdict, records: out.records, steps: out.steps })
    }

    fn probe_many(&self, masses: &[f64], workers: usize) -> Result<Vec<Result<ProbeOutcome>>> {
        let pool = worker_pool(workers)?;
        Ok(pool.install(|| masses.par_iter().map(|&m| self.probe(m)).collect()))
    }
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidArgument("worker count must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// One probe per mass, run concurrently on `workers` threads. Failed runs are
/// reported in place; results keep the input order.
pub fn critical_mass_scan(
    masses: &[f64],
    scenario: &ProbeScenario,
    workers: usize,
) -> Result<Vec<(f64, Result<ProbeOutcome>)>> {
    if !matches!(scenario.grid.geometry(), Geometry::RadialDisk { .. }) {
        return Err(Error::InvalidArgument("the critical-mass scan runs on the radial disk".into()));
    }
    if !scenario.params.is_energy_regime() || !scenario.params.source.is_zero() {
        return Err(Error::InvalidArgument("the critical-mass scan needs gamma = exp(-v), tau = delta = 1, f = 0".into()));
    }
    if scenario.blowup.lambda < 16.0 && scenario.data != DataChoice::Bump {
        return Err(Error::InvalidArgument(format!(
            "concentrating data in the scan need lambda >= 16, got {}",
            scenario.blowup.lambda
        )));
    }
    let outcomes = scenario.probe_many(masses, workers)?;
    Ok(masses.iter().copied().zip(outcomes).collect())
}

/// Result of [`threshold_bisection`].
#[derive(Debug, Clone)]
pub struct BisectionOutcome {
    /// Largest mass seen Bounded.
    pub low: f64,
    /// Smallest mass seen Growing.
    pub high: f64,
    /// Set when an Undecided probe stopped the search early.
    pub undecided_at: Option<f64>,
    /// Every probe in order, endpoints first.
    pub probes: Vec<(f64, TrajectoryVerdict)>,
}

impl BisectionOutcome {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn flagged(&self) -> bool {
        self.undecided_at.is_some()
    }
}

/// Bisection in mass between a Bounded and a Growing endpoint, each probe a
/// full run. The two endpoint runs execute concurrently.
pub fn threshold_bisection(
    m_low: f64,
    m_high: f64,
    tolerance: f64,
    scenario: &ProbeScenario,
    workers: usize,
) -> Result<BisectionOutcome> {
    if !(m_low > 0.0 && m_low < m_high) {
        return Err(Error::Bisection(format!("need 0 < m_low < m_high, got [{m_low}, {m_high}]")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Bisection(format!("tolerance must be positive, got {tolerance}")));
    }
    let ends = scenario.probe_many(&[m_low, m_high], workers)?;
    let mut ends = ends.into_iter();
    let low = ends.next().expect("two probes")?;
    let high = ends.next().expect("two probes")?;
    if low.verdict.label != Label::Bounded {
        return Err(Error::Bisection(format!("m_low = {m_low} classified {}, expected Bounded", low.verdict.label)));
    }
    if high.verdict.label != Label::Growing {
        return Err(Error::Bisection(format!(
            "m_high = {m_high} classified {}, expected Growing",
            high.verdict.label
        )));
    }
    let mut out = BisectionOutcome {
        low: m_low,
        high: m_high,
        undecided_at: None,
        probes: vec![(m_low, low.verdict), (m_high, high.verdict)],
    };
    while out.width() > tolerance {
        let mid = 0.5 * (out.low + out.high);
        let verdict = scenario.probe(mid)?.verdict;
        out.probes.push((mid, verdict));
        match verdict.label {
            Label::Bounded => out.low = mid,
            Label::Growing => out.high = mid,
            Label::Undecided => {
                out.undecided_at = Some(mid);
                break;
            }
        }
    }
    Ok(out)
}

/// One variant of the suppression comparison.
#[derive(Debug, Clone)]
pub struct SuppressionVariant {
    pub name: &'static str,
    pub params: ModelParams,
    pub outcome: Result<TrajectoryVerdict>,
}

/// The three standard variants sharing `base` except for γ and f:
/// no damping; logistic damping `u - u²`; motility bounded below by 1/2.
pub fn suppression_variants(base: &ModelParams) -> [(&'static str, ModelParams); 3] {
    let plain = ModelParams { motility: MotilitySpec::Exp, source: SourceSpec::Zero, ..*base };
    [
        ("undamped", plain),
        ("logistic", ModelParams { source: SourceSpec::Logistic { mu: 1.0, lambda: 1.0, l: 2.0 }, ..plain }),
        ("motility_floor", ModelParams { motility: MotilitySpec::ExpShifted { floor: 0.5 }, ..plain }),
    ]
}

/// Runs the three suppression variants from the same concentrating datum of
/// mass `mass`. Each variant overrides the scenario's γ and f.
pub fn suppression_check(mass: f64, scenario: &ProbeScenario, workers: usize) -> Result<Vec<SuppressionVariant>> {
    let initial = match scenario.data {
        DataChoice::Bump => scenario.initial_state(mass)?,
        _ => ProbeScenario { data: DataChoice::Blowup, ..scenario.clone() }.initial_state(mass)?,
    };
    let variants = suppression_variants(&scenario.params);
    let pool = worker_pool(workers)?;
    let outcomes: Vec<Result<TrajectoryVerdict>> = pool.install(|| {
        variants
            .par_iter()
            .map(|(_, params)| {
                let spec = RunSpec { params: *params, ..scenario.run_spec() };
                let out = stepper::run(initial.clone(), &spec)?;
                classify(&out.records, scenario.horizon)
            })
            .collect()
    });
    Ok(variants
        .into_iter()
        .zip(outcomes)
        .map(|((name, params), outcome)| SuppressionVariant { name, params, outcome })
        .collect())
}
