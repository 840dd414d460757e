//! Acceptance suite. Each test prints one `ACCEPTANCE <name>: PASS|FAIL` line
//! with the measured quantities, then asserts.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use kslab_core::discretization::{
    apply_shifted_helmholtz, build_grid, inverse_helmholtz, solve_shifted_helmholtz, Coefficient, Field,
    Geometry, Grid, Resolution,
};
use kslab_core::experiments::{
    self, BlowupTemplate, BumpTemplate, DataChoice, Label, ProbeScenario, CRITICAL_MASS,
};
use kslab_core::initdata::{self, BumpParams};
use kslab_core::model::ModelParams;
use kslab_core::stepper::{self, RunSpec, State, StepControls};
use kslab_core::diagnostics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, pass: bool, detail: String, started: Instant) {
    println!(
        "ACCEPTANCE {name}: {} ({detail}; {:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "{name} failed: {detail}");
}

fn disk(n: usize) -> Arc<Grid> {
    build_grid(Geometry::RadialDisk { radius: 1.0 }, Resolution::uniform(n)).unwrap()
}

fn geometries() -> Vec<Arc<Grid>> {
    vec![
        build_grid(Geometry::Interval { length: 1.0 }, Resolution::uniform(64)).unwrap(),
        build_grid(Geometry::Rectangle { lx: 1.0, ly: 0.75 }, Resolution::axes(24, 18)).unwrap(),
        disk(128),
    ]
}

/// Bessel J₀ by its power series; accurate to rounding for |x| ≤ 5.
fn bessel_j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
    }
    sum
}

/// First positive zero of J₁ (the first Neumann eigenvalue of the unit disk is its square).
const J1_ZERO: f64 = 3.831_705_970_207_512;

fn sci(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "))
}

/// Grid, exact Neumann eigenfunction and its eigenvalue k².
type EigenCase = (Arc<Grid>, Box<dyn Fn([f64; 2]) -> f64>, f64);

fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn operator_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);

    let mut round_trip = 0.0_f64;
    for grid in geometries() {
        for _ in 0..10 {
            let rhs = Field::new(grid.clone(), (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let z = inverse_helmholtz(&rhs).unwrap();
            let back = apply_shifted_helmholtz(Coefficient::Scalar(1.0), 1.0, &z);
            round_trip = round_trip.max(back.dist_inf(&rhs));
        }
    }

    // Neumann eigenfunction f with -Δf = k²f solves (I - Δ)f = (1 + k²)f; error of the discrete solve in ∞-norm
    let sizes = [16usize, 32, 64, 128];
    let mut orders = Vec::new();
    let eig_errors = |make: &dyn Fn(usize) -> EigenCase| -> Vec<f64> {
        sizes
            .iter()
            .map(|&n| {
                let (grid, f, k2) = make(n);
                let exact = Field::from_fn(grid, f);
                let z = inverse_helmholtz(&exact.map(|x| (1.0 + k2) * x)).unwrap();
                z.dist_inf(&exact)
            })
            .collect()
    };
    let interval = eig_errors(&|n| {
        let g = build_grid(Geometry::Interval { length: 1.0 }, Resolution::uniform(n)).unwrap();
        (g, Box::new(|[x, _]: [f64; 2]| (PI * x).cos()), PI * PI)
    });
    let rectangle = eig_errors(&|n| {
        let g = build_grid(Geometry::Rectangle { lx: 1.0, ly: 2.0 }, Resolution::axes(n, 2 * n)).unwrap();
        (g, Box::new(|[x, y]: [f64; 2]| (PI * x).cos() * (PI * y).cos()), 2.0 * PI * PI)
    });
    let radial = eig_errors(&|n| (disk(n), Box::new(|[r, _]: [f64; 2]| bessel_j0(J1_ZERO * r)), J1_ZERO * J1_ZERO));
    for e in [&interval, &rectangle, &radial] {
        orders.extend(observed_orders(e));
    }
    let orders_ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.2);

    let mut comparison_min = f64::INFINITY;
    let grids = geometries();
    for k in 0..100 {
        let grid = &grids[k % grids.len()];
        let n = grid.len();
        let rhs: Vec<f64> =
            (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..10.0) }).collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..20.0)).collect();
        let beta = 10f64.powf(rng.gen_range(-3.0..1.0));
        let z = solve_shifted_helmholtz(
            Coefficient::Nodal(&alpha),
            beta,
            &Field::new(grid.clone(), rhs).unwrap(),
        )
        .unwrap();
        comparison_min = comparison_min.min(z.min());
    }

    let pass = round_trip <= 1e-8 && orders_ok && comparison_min >= -1e-12;
    report(
        "operator_correctness",
        pass && started.elapsed().as_secs_f64() < 10.0,
        format!(
            "round trip {round_trip:.2e}; eigenfunction orders {:?}; comparison min {comparison_min:.2e}",
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
        ),
        started,
    );
}

fn bump_state(grid: &Arc<Grid>, center: [f64; 2], width: f64, mass: f64, v: f64, h: f64) -> State {
    initdata::bump_data(
        grid,
        &BumpParams { center, width, mass, v_level: v, h_level: h, perturbation: 0.0, seed: 0 },
    )
    .unwrap()
}

#[test]
fn conservation_and_positivity() {
    let started = Instant::now();
    let params = ModelParams::default();
    let cases = [
        (
            build_grid(Geometry::Interval { length: 1.0 }, Resolution::uniform(128)).unwrap(),
            [0.4, 0.0],
            0.2,
            3.0,
        ),
        (
            build_grid(Geometry::Rectangle { lx: 1.0, ly: 1.0 }, Resolution::uniform(32)).unwrap(),
            [0.45, 0.55],
            0.3,
            5.0,
        ),
        (disk(256), [0.0, 0.0], 0.3, 0.8 * CRITICAL_MASS),
    ];
    let mut worst_drift = 0.0_f64;
    let mut worst_min = f64::INFINITY;
    for (grid, center, width, mass) in cases {
        let mut s = bump_state(&grid, center, width, mass, 0.0, 0.0);
        let m0 = s.mass();
        for _ in 0..10_000 {
            s = stepper::step(&s, &params, 1e-3).unwrap();
            worst_drift = worst_drift.max((s.mass() - m0).abs() / m0);
            worst_min = worst_min.min(s.min_value());
        }
    }
    report(
        "conservation_and_positivity",
        worst_drift <= 1e-9 && worst_min >= -1e-12 && started.elapsed().as_secs_f64() < 120.0,
        format!("max relative mass drift {worst_drift:.2e}; min(u,v,h) {worst_min:.2e}"),
        started,
    );
}

#[test]
fn auxiliary_identities_first_order() {
    let started = Instant::now();
    let grid = disk(256);
    let params = ModelParams::default();
    let initial = bump_state(&grid, [0.0, 0.0], 0.5, 0.5 * CRITICAL_MASS, 0.5, 1.0);
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    for k in 0..4 {
        let dt = 0.02 / f64::from(1 << k);
        let spec = RunSpec {
            track_aux: true,
            fixed_dt: Some(dt),
            diagnostics_every: usize::MAX,
            ..RunSpec::new(params, 1.0)
        };
        let out = stepper::run(initial.clone(), &spec).unwrap();
        let &(t, a, b) = out.identities.last().unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        r1.push(a);
        r2.push(b);
    }
    let ratios = |r: &[f64]| r.windows(2).map(|w| w[0] / w[1]).collect::<Vec<_>>();
    let (q1, q2) = (ratios(&r1), ratios(&r2));
    let ok = q1.iter().chain(&q2).all(|q| (1.5..=3.0).contains(q));
    report(
        "auxiliary_identities_first_order",
        ok && started.elapsed().as_secs_f64() < 300.0,
        format!("R1 {} ratios {q1:.3?}; R2 {} ratios {q2:.3?}", sci(&r1), sci(&r2)),
        started,
    );
}

#[test]
fn energy_law() {
    let started = Instant::now();
    let grid = disk(256);
    let params = ModelParams::default();
    let initial = bump_state(&grid, [0.0, 0.0], 0.5, 0.8 * CRITICAL_MASS, 0.0, 0.0);
    let h = grid.h();
    let run_with = |scale: f64| {
        let base = StepControls::default();
        let controls = StepControls {
            dt_max: base.dt_max * scale,
            max_rel_change: base.max_rel_change * scale,
            ..base
        };
        let spec = RunSpec { controls, track_energy: true, diagnostics_every: usize::MAX, ..RunSpec::new(params, 100.0) };
        stepper::run(initial.clone(), &spec).unwrap()
    };
    let coarse = run_with(1.0);
    let fine = run_with(0.5);

    let mut worst_increase = f64::NEG_INFINITY;
    let mut min_d = f64::INFINITY;
    for w in coarse.energy.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slack = diagnostics::monotonicity_tolerance(b.dt, h, a.f);
        worst_increase = worst_increase.max((b.f - a.f) / slack);
        min_d = min_d.min(a.d).min(b.d);
    }
    // The first steps resolve an initial layer whose width does not scale with dt, so the pointwise
    // comparison starts at t = 1; the time-integrated residual covers the whole run.
    let residuals = |e: &[stepper::EnergySample]| {
        let mut late = 0.0_f64;
        let mut integrated = 0.0;
        for w in e.windows(2) {
            let r = diagnostics::step_energy_residual(w[0].f, w[1].f, w[0].d, w[1].d, w[1].dt);
            integrated += r * w[1].dt;
            if w[0].t >= 1.0 {
                late = late.max(r);
            }
        }
        (late, integrated)
    };
    let ((rc, ic), (rf, if_)) = (residuals(&coarse.energy), residuals(&fine.energy));
    let (ratio, iratio) = (rc / rf, ic / if_);
    let ok = worst_increase <= 1.0
        && min_d >= -1e-10
        && (1.5..=3.0).contains(&ratio)
        && (1.5..=3.0).contains(&iratio);
    report(
        "energy_law",
        ok && started.elapsed().as_secs_f64() < 300.0,
        format!(
            "max (F_k+1 - F_k)/tolerance {worst_increase:.3e}; min D {min_d:.3e}; max step residual for t >= 1 {rc:.3e} -> {rf:.3e} (ratio {ratio:.3}); integrated {ic:.3e} -> {if_:.3e} (ratio {iratio:.3})"
        ),
        started,
    );
}

fn scan_scenario(data: DataChoice) -> ProbeScenario {
    ProbeScenario {
        grid: disk(1024),
        params: ModelParams::default(),
        controls: StepControls::default(),
        horizon: 200.0,
        diagnostics_every: 1,
        bump: BumpTemplate { width: 0.2, v_level: 0.0, h_level: 0.0 },
        blowup: BlowupTemplate { lambda: 32.0, r: 0.4, r1: 0.2 },
        data,
    }
}

#[test]
fn critical_mass_threshold() {
    let started = Instant::now();
    let ratios = [0.5, 0.8, 1.3, 1.5, 2.0];
    let expected = [Label::Bounded, Label::Bounded, Label::Growing, Label::Growing, Label::Growing];
    let masses: Vec<f64> = ratios.iter().map(|r| r * CRITICAL_MASS).collect();
    let scan = experiments::critical_mass_scan(&masses, &scan_scenario(DataChoice::Auto), 4).unwrap();
    let mut scan_ok = true;
    let mut lines = Vec::new();
    for ((ratio, (_, outcome)), want) in ratios.iter().zip(&scan).zip(expected) {
        match outcome {
            Ok(o) => {
                scan_ok &= o.verdict.label == want;
                lines.push(format!(
                    "{ratio}: {} (growth {:.4}, slope {:.2e}, variation {:.2e})",
                    o.verdict.label, o.verdict.growth_factor, o.verdict.trend_slope, o.verdict.final_variation
                ));
            }
            Err(e) => {
                scan_ok = false;
                lines.push(format!("{ratio}: error {e}"));
            }
        }
    }
    let bisection = experiments::threshold_bisection(
        0.8 * CRITICAL_MASS,
        1.5 * CRITICAL_MASS,
        2.0,
        &scan_scenario(DataChoice::Blowup),
        2,
    );
    let (bisect_ok, bisect_line) = match &bisection {
        Ok(b) => (
            !b.flagged() && b.low >= 0.8 * CRITICAL_MASS && b.high <= 1.2 * CRITICAL_MASS,
            format!("bisection [{:.3}, {:.3}] flagged {}", b.low, b.high, b.flagged()),
        ),
        Err(e) => (false, format!("bisection error: {e}")),
    };
    report(
        "critical_mass_threshold",
        scan_ok && bisect_ok && started.elapsed().as_secs_f64() < 1800.0,
        format!("scan m/8π {}; {bisect_line}", lines.join(", ")),
        started,
    );
}

#[test]
fn energy_divergence_of_concentrating_family() {
    let started = Instant::now();
    let grid = disk(1024);
    let lambdas = [4.0, 8.0, 16.0, 32.0, 64.0];
    let super_m = 10.0 * PI;
    let sup = initdata::energy_vs_lambda(&grid, super_m, 0.4, 0.2, &lambdas).unwrap();
    let sub = initdata::energy_vs_lambda(&grid, 4.0 * PI, 0.4, 0.2, &lambdas).unwrap();
    let decreasing = sup.points.windows(2).all(|w| w[1].1 < w[0].1);
    let floor = -2.0 * super_m * (super_m / CRITICAL_MASS - 1.0) * 0.25;
    // Bounded below: successive decrements contract by a factor q < 1, so the series stays above
    // F_last - |ΔF_last| q/(1-q). The part of F that carries the ln λ dependence, F - K²|Ω|/2,
    // must fall for m > 8π and must not fall for m < 8π.
    let steps: Vec<f64> = sub.points.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let q = steps.windows(2).map(|w| (w[1] / w[0]).abs()).fold(0.0, f64::max);
    let last = sub.points.last().unwrap().1;
    let lower = last - steps.last().unwrap().abs() * q / (1.0 - q);
    let bounded_below = q < 1.0 && lower.is_finite() && sub.shift_free_slope > 0.0;
    let fmt = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    report(
        "energy_divergence_of_concentrating_family",
        decreasing
            && sup.slope < floor
            && sup.shift_free_slope < 0.0
            && bounded_below
            && started.elapsed().as_secs_f64() < 60.0,
        format!(
            "m=10π F [{}] slope {:.3} (floor {floor:.3}), F-K²|Ω|/2 slope {:.3}; \
             m=4π F [{}] decrement ratio {q:.3}, lower bound {lower:.4e}, F-K²|Ω|/2 slope {:.3}",
            fmt(&mut sup.points.iter().map(|p| p.1)),
            sup.slope,
            sup.shift_free_slope,
            fmt(&mut sub.points.iter().map(|p| p.1)),
            sub.shift_free_slope
        ),
        started,
    );
}

#[test]
fn suppression() {
    let started = Instant::now();
    let variants = experiments::suppression_check(1.5 * CRITICAL_MASS, &scan_scenario(DataChoice::Blowup), 3).unwrap();
    let expected = [Label::Growing, Label::Bounded, Label::Bounded];
    let mut ok = true;
    let mut lines = Vec::new();
    for (v, want) in variants.iter().zip(expected) {
        match &v.outcome {
            Ok(verdict) => {
                ok &= verdict.label == want;
                lines.push(format!("{}: {} (expected {want})", v.name, verdict.label));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("{}: error {e}", v.name));
            }
        }
    }
    report("suppression", ok && started.elapsed().as_secs_f64() < 1200.0, lines.join(", "), started);
}

#[test]
fn stationary_consistency() {
    let started = Instant::now();
    let grid = disk(256);
    let mass = 4.0 * PI;
    let params = ModelParams::default();
    let triple = experiments::stationary_radial(&grid, mass).unwrap();

    let spec = RunSpec {
        snapshot_times: (1..=50).map(f64::from).collect(),
        diagnostics_every: usize::MAX,
        ..RunSpec::new(params, 50.0)
    };
    let out = stepper::run(triple.to_state(0.0).unwrap(), &spec).unwrap();
    let drift = out.snapshots.iter().map(|s| s.u.dist_inf(&triple.u)).fold(0.0, f64::max);
    let drift_tol = grid.h() * grid.h();

    let initial = bump_state(&grid, [0.0, 0.0], 0.5, mass, 0.0, 0.0);
    let spec = RunSpec { diagnostics_every: usize::MAX, ..RunSpec::new(params, 500.0) };
    let last = stepper::run(initial, &spec).unwrap().final_state;
    let gap = last.u.dist_inf(&triple.u).max(last.v.dist_inf(&triple.v)).max(last.h.dist_inf(&triple.h));

    report(
        "stationary_consistency",
        triple.residual <= 1e-8 && drift <= drift_tol && gap <= 1e-3 && started.elapsed().as_secs_f64() < 900.0,
        format!(
            "residual {:.2e} after {} iterations; drift over T=50 {drift:.2e} (h² = {drift_tol:.2e}); distance at T=500 {gap:.2e}",
            triple.residual, triple.iterations
        ),
        started,
    );
}
