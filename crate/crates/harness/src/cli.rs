//! `kslab` subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kslab_core::diagnostics;
use kslab_core::experiments::{self, BumpTemplate, Label, ProbeOutcome, ProbeScenario, CRITICAL_MASS};
use kslab_core::initdata::{self, BlowupFamilyParams, BumpParams};
use kslab_core::stepper::{self, RunSpec, State};
use serde_json::{json, Value};

use crate::config::{parse_scenario, InitSpec, Scenario};
use crate::error::HarnessError;
use crate::output::{self, num};

#[derive(Debug, Parser)]
#[command(name = "kslab", version, about = "Keller-Segel density-suppressed motility laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML).
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one scenario and write diagnostics, snapshots and a verdict.
    Run(Common),
    /// Identity and energy residuals under dt and h refinement.
    Verify(Common),
    /// Write the initial fields and their Lyapunov value.
    Initdata {
        #[command(flatten)]
        common: Common,
        /// Comma-separated λ list: also evaluate F along the concentrating family.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
    /// Classify one probe per mass in `[scan]`.
    Scan(Common),
    /// Bisect the mass threshold between a Bounded and a Growing probe.
    Bisect {
        #[command(flatten)]
        common: Common,
        /// Mass expected Bounded; overrides `bisect.low`.
        #[arg(long)]
        low: Option<f64>,
        /// Mass expected Growing; overrides `bisect.high`.
        #[arg(long)]
        high: Option<f64>,
        /// Stop once the bracket is narrower than this; overrides `bisect.tol`.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Radial stationary solution for the configured mass.
    Stationary(Common),
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(dir) => {
            println!("artifacts in {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("kslab: {e}");
            e.exit_code()
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Run(c) | Command::Verify(c) | Command::Scan(c) | Command::Stationary(c) => c,
        Command::Initdata { common, .. } | Command::Bisect { common, .. } => common,
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Run(_) => "run",
        Command::Verify(_) => "verify",
        Command::Initdata { .. } => "initdata",
        Command::Scan(_) => "scan",
        Command::Bisect { .. } => "bisect",
        Command::Stationary(_) => "stationary",
    }
}

pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    parse_scenario(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Runs one command; returns the output directory.
pub fn execute(command: &Command) -> Result<PathBuf, HarnessError> {
    let c = common(command);
    let mut scenario = load(&c.config)?;
    if let Command::Bisect { low, high, tol, .. } = command {
        scenario.bisect.low = low.or(scenario.bisect.low);
        scenario.bisect.high = high.or(scenario.bisect.high);
        scenario.bisect.tol = tol.or(scenario.bisect.tol);
    }
    let name = command_name(command);
    let hash = scenario.hash();
    let dir = c
        .out
        .clone()
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("kslab-out").join(format!("{name}-{}", &hash[..12])));
    std::fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    write_manifest(&dir, name, &scenario, &hash)?;
    match command {
        Command::Run(_) => run(&scenario, &dir),
        Command::Verify(_) => verify(&scenario, &dir),
        Command::Initdata { sweep, .. } => initial(&scenario, sweep.as_deref(), &dir),
        Command::Scan(_) => scan(&scenario, &hash, &dir),
        Command::Bisect { .. } => bisect(&scenario, &hash, &dir),
        Command::Stationary(_) => stationary(&scenario, &dir),
    }?;
    Ok(dir)
}

fn write_manifest(dir: &Path, command: &str, scenario: &Scenario, hash: &str) -> Result<(), HarnessError> {
    let manifest = json!({
        "command": command,
        "scenario_hash": hash,
        "scenario": scenario,
        "versions": {
            "kslab-harness": env!("CARGO_PKG_VERSION"),
            "kslab-core": kslab_core::VERSION,
        },
    });
    output::write_json(&dir.join("manifest.json"), &manifest)
}

/// Initial state described by the scenario.
pub fn initial_state(scenario: &Scenario) -> Result<State, HarnessError> {
    let grid = scenario.grid.build()?;
    let mass = || {
        scenario
            .initdata
            .mass()
            .ok_or_else(|| HarnessError::Config("initdata.mass: no mass given (set initdata.mass or mass)".into()))
    };
    let state = match scenario.initdata {
        InitSpec::Bump { width, center, v_level, h_level, perturbation, .. } => initdata::bump_data(
            &grid,
            &BumpParams {
                center: center.expect("resolved"),
                width: width.expect("resolved"),
                mass: mass()?,
                v_level,
                h_level,
                perturbation,
                seed: scenario.seed,
            },
        )?,
        InitSpec::Blowup { lambda, r, r1, .. } => {
            initdata::blowup_data(&grid, &BlowupFamilyParams { lambda, r, r1, mass: mass()? })?.state
        }
        InitSpec::Constant { u, v, h } => initdata::constant_data(&grid, u, v, h)?,
        InitSpec::Stationary { .. } => experiments::stationary_radial(&grid, mass()?)?.to_state(0.0)?,
    };
    Ok(state)
}

fn run_spec(scenario: &Scenario) -> RunSpec {
    RunSpec {
        controls: scenario.controls,
        diagnostics_every: scenario.output.diagnostics_every,
        snapshot_times: scenario.output.snapshot_times.clone(),
        track_aux: scenario.output.track_aux,
        track_energy: scenario.output.track_energy,
        ..RunSpec::new(scenario.model, scenario.horizon)
    }
}

fn run(scenario: &Scenario, dir: &Path) -> Result<(), HarnessError> {
    let out = stepper::run(initial_state(scenario)?, &run_spec(scenario))?;
    output::write(&dir.join("diagnostics.csv"), output::diagnostics_csv(&out.records))?;
    for snap in &out.snapshots {
        output::write(&dir.join("snapshots").join(output::snapshot_name(snap.t)), output::snapshot_csv(snap))?;
    }
    let verdict = match experiments::classify(&out.records, scenario.horizon) {
        Ok(v) => output::verdict_json(&v),
        Err(e) => json!({ "label": Value::Null, "reason": e.to_string() }),
    };
    let mut doc = json!({ "steps": out.steps, "retries": out.retries, "clamped_steps": out.clamped_steps });
    doc["verdict"] = verdict;
    output::write_json(&dir.join("verdict.json"), &doc)
}

fn verify(scenario: &Scenario, dir: &Path) -> Result<(), HarnessError> {
    let v = scenario.verify;
    let energy = scenario.model.is_energy_regime();
    let mut csv = String::from("nx,h,dt,R1,R2,energy_residual\n");
    println!("{:>6} {:>11} {:>11} {:>11} {:>11} {:>11}", "nx", "h", "dt", "R1", "R2", "energy");
    for j in 0..v.h_levels {
        let mut refined = scenario.clone();
        refined.grid.nx = scenario.grid.nx << j;
        refined.grid.ny = scenario.grid.ny.map(|n| n << j);
        let initial = initial_state(&refined)?;
        let h = initial.grid().h();
        for k in 0..v.dt_levels {
            let dt = v.dt / f64::from(1u32 << k);
            let spec = RunSpec {
                fixed_dt: Some(dt),
                track_aux: true,
                track_energy: energy,
                diagnostics_every: usize::MAX,
                controls: scenario.controls,
                ..RunSpec::new(scenario.model, v.horizon)
            };
            let out = stepper::run(initial.clone(), &spec)?;
            let &(_, r1, r2) = out.identities.last().expect("aux tracked");
            // time-averaged step residual of the energy law
            let e_res = energy.then(|| {
                out.energy
                    .windows(2)
                    .map(|w| diagnostics::step_energy_residual(w[0].f, w[1].f, w[0].d, w[1].d, w[1].dt) * w[1].dt)
                    .sum::<f64>()
                    / v.horizon
            });
            println!(
                "{:>6} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11}",
                refined.grid.nx,
                h,
                dt,
                r1,
                r2,
                e_res.map_or("-".into(), |e| format!("{e:.4e}"))
            );
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                refined.grid.nx,
                num(h),
                num(dt),
                num(r1),
                num(r2),
                e_res.map(num).unwrap_or_default()
            ));
        }
    }
    output::write(&dir.join("verify.csv"), csv)
}

fn initial(scenario: &Scenario, sweep: Option<&[f64]>, dir: &Path) -> Result<(), HarnessError> {
    let state = initial_state(scenario)?;
    output::write(&dir.join("initdata.csv"), output::snapshot_csv(&state))?;
    let (f, d) = if scenario.model.is_energy_regime() {
        (
            Some(diagnostics::lyapunov_f(&state, &scenario.model)?),
            Some(diagnostics::dissipation_d(&state, &scenario.model)?),
        )
    } else {
        (None, None)
    };
    match f {
        Some(f) => println!("F = {}", num(f)),
        None => println!("F undefined outside gamma = exp(-v), tau = delta = 1"),
    }
    let mut doc = json!({ "mass": state.mass(), "F": f, "D": d });
    if let InitSpec::Blowup { lambda, r, r1, .. } = scenario.initdata {
        let grid = state.grid().clone();
        let data = initdata::blowup_data(&grid, &BlowupFamilyParams { lambda, r, r1, mass: state.mass() })?;
        doc["amplitude"] = json!(data.amplitude);
        doc["shift"] = json!(data.shift);
    }
    if let Some(lambdas) = sweep {
        let (mass, r, r1) = match scenario.initdata {
            InitSpec::Blowup { r, r1, .. } => (state.mass(), r, r1),
            _ => return Err(HarnessError::Config("--sweep needs initdata.kind = \"blowup\"".into())),
        };
        let s = initdata::energy_vs_lambda(state.grid(), mass, r, r1, lambdas)?;
        let mut csv = String::from("lambda,ln_lambda,F,K,F_shift_free\n");
        for (i, &(lambda, f)) in s.points.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                num(lambda),
                num(lambda.ln()),
                num(f),
                num(s.shifts[i]),
                num(s.shift_free[i])
            ));
        }
        output::write(&dir.join("energy_sweep.csv"), csv)?;
        doc["sweep"] = json!({ "slope": s.slope, "shift_free_slope": s.shift_free_slope });
        println!("F against ln λ: slope {:.6e}", s.slope);
    }
    output::write_json(&dir.join("initdata.json"), &doc)
}

fn probe_scenario(scenario: &Scenario) -> Result<ProbeScenario, HarnessError> {
    Ok(ProbeScenario {
        grid: scenario.grid.build()?,
        params: scenario.model,
        controls: scenario.controls,
        horizon: scenario.horizon,
        diagnostics_every: scenario.output.diagnostics_every,
        bump: BumpTemplate { width: scenario.scan.bump_width, v_level: 0.0, h_level: 0.0 },
        blowup: scenario.scan.blowup,
        data: scenario.scan.data,
    })
}

fn probe_row(hash: &str, mass: f64, outcome: &Result<ProbeOutcome, kslab_core::Error>) -> Value {
    let mut row = json!({ "scenario": hash, "mass": mass, "mass_over_8pi": mass / CRITICAL_MASS });
    match outcome {
        Ok(o) => {
            row["verdict"] = output::verdict_json(&o.verdict);
            row["steps"] = json!(o.steps);
        }
        Err(e) => row["error"] = json!(e.to_string()),
    }
    row
}

fn write_probe(dir: &Path, index: usize, outcome: &ProbeOutcome) -> Result<(), HarnessError> {
    let sub = dir.join("probes").join(format!("{index:03}"));
    output::write(&sub.join("diagnostics.csv"), output::diagnostics_csv(&outcome.records))?;
    let mut doc = output::verdict_json(&outcome.verdict);
    doc["mass"] = json!(outcome.mass);
    output::write_json(&sub.join("verdict.json"), &doc)
}

fn scan(scenario: &Scenario, hash: &str, dir: &Path) -> Result<(), HarnessError> {
    let probes = probe_scenario(scenario)?;
    let results = experiments::critical_mass_scan(&scenario.scan.masses, &probes, scenario.workers()?)?;
    let mut rows = Vec::new();
    let mut csv = String::from("mass,mass_over_8pi,label,peak,growth_factor,trend_slope,final_variation\n");
    let mut failure = None;
    let mut undecided = Vec::new();
    for (i, (mass, outcome)) in results.iter().enumerate() {
        rows.push(probe_row(hash, *mass, outcome));
        match outcome {
            Ok(o) => {
                write_probe(dir, i, o)?;
                let v = o.verdict;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    num(*mass),
                    num(mass / CRITICAL_MASS),
                    v.label,
                    num(v.peak),
                    num(v.growth_factor),
                    num(v.trend_slope),
                    num(v.final_variation)
                ));
                println!("m = {mass:.6} (m/8π = {:.4}): {}", mass / CRITICAL_MASS, v.label);
                if v.label == Label::Undecided {
                    undecided.push(*mass);
                }
            }
            Err(e) => {
                println!("m = {mass:.6}: {e}");
                failure.get_or_insert_with(|| e.clone());
            }
        }
    }
    output::write_jsonl(&dir.join("scan.jsonl"), &rows)?;
    output::write(&dir.join("scan.csv"), csv)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if !undecided.is_empty() {
        return Err(HarnessError::Undecided(format!("undecided at masses {undecided:?}")));
    }
    Ok(())
}

fn bisect(scenario: &Scenario, hash: &str, dir: &Path) -> Result<(), HarnessError> {
    let b = scenario.bisect;
    let (Some(low), Some(high), Some(tol)) = (b.low, b.high, b.tol) else {
        return Err(HarnessError::Config("bisect: low, high and tol are required (config [bisect] or flags)".into()));
    };
    let probes = probe_scenario(scenario)?;
    let outcome = experiments::threshold_bisection(low, high, tol, &probes, scenario.workers()?)?;
    let rows: Vec<Value> = outcome
        .probes
        .iter()
        .map(|(m, v)| {
            let mut row = json!({ "scenario": hash, "mass": m, "mass_over_8pi": m / CRITICAL_MASS });
            row["verdict"] = output::verdict_json(v);
            row
        })
        .collect();
    output::write_jsonl(&dir.join("bisect.jsonl"), &rows)?;
    let summary = json!({
        "scenario": hash,
        "low": outcome.low,
        "high": outcome.high,
        "width": outcome.width(),
        "undecided_at": outcome.undecided_at,
        "probes": outcome.probes.len(),
    });
    output::write_json(&dir.join("verdict.json"), &summary)?;
    println!("threshold in [{:.6}, {:.6}] (m/8π in [{:.4}, {:.4}])", outcome.low, outcome.high, outcome.low / CRITICAL_MASS, outcome.high / CRITICAL_MASS);
    match outcome.undecided_at {
        Some(m) => Err(HarnessError::Undecided(format!("probe at mass {m} was Undecided"))),
        None => Ok(()),
    }
}

fn stationary(scenario: &Scenario, dir: &Path) -> Result<(), HarnessError> {
    let mass = scenario
        .initdata
        .mass()
        .or(scenario.mass)
        .ok_or_else(|| HarnessError::Config("stationary: no mass given".into()))?;
    let grid = scenario.grid.build()?;
    let triple = experiments::stationary_radial(&grid, mass)?;
    let state = triple.to_state(0.0)?;
    output::write(&dir.join("stationary.csv"), output::snapshot_csv(&state))?;
    let doc = json!({
        "mass": mass,
        "residual": triple.residual,
        "iterations": triple.iterations,
        "F": diagnostics::lyapunov_f(&state, &scenario.model).ok(),
        "D": diagnostics::dissipation_d(&state, &scenario.model).ok(),
    });
    println!("stationary residual {:.3e} after {} iterations", triple.residual, triple.iterations);
    output::write_json(&dir.join("stationary.json"), &doc)
}
