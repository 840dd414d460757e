use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SUBCRITICAL: &str = r#"
mass = 20.0
horizon = 5.0
[grid]
geometry = { kind = "radial_disk", radius = 1.0 }
nx = 64
[initdata]
kind = "bump"
width = 0.5
[output]
diagnostics_every = 5
snapshot_times = [0.0, 2.5, 5.0]
track_energy = true
track_aux = true
"#;

fn kslab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kslab"));
    cmd.args(args).env_remove("KSLAB_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_owned()).collect()
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "sub.toml", SUBCRITICAL);
    let out_dir = tmp.path().join("out");
    let out = kslab(&["run", &cfg, "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,dt,mass,u_l2,u_linf,v_l2,v_linf,gradv_l2,gradv_linf,h_l1,h_linf,F,D,R1,R2"
    );
    let f: Vec<f64> = column(&csv, "F").iter().map(|s| s.parse().unwrap()).collect();
    let dt: Vec<f64> = column(&csv, "dt").iter().map(|s| s.parse().unwrap()).collect();
    for (w, dt) in f.windows(2).zip(&dt[1..]) {
        // several steps lie between rows, so allow a generous per-row slack
        assert!(w[1] <= w[0] + 1e-3 * dt * (1.0 + w[0].abs()), "F rose: {} -> {}", w[0], w[1]);
    }
    let r1 = column(&csv, "R1");
    assert!(r1[0].is_empty() && !r1[1].is_empty());
    let mass: Vec<f64> = column(&csv, "mass").iter().map(|s| s.parse().unwrap()).collect();
    assert!(mass.iter().all(|m| (m - 20.0).abs() < 1e-9));

    for t in ["0", "2.5", "5"] {
        let snap = fs::read_to_string(out_dir.join("snapshots").join(format!("{t}.csv"))).unwrap();
        assert_eq!(snap.lines().next().unwrap(), "r,u,v,h");
        assert_eq!(snap.lines().count(), 65);
    }
    let verdict: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("verdict.json")).unwrap()).unwrap();
    assert!(verdict["verdict"]["label"].is_string());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"]["controls"]["dt_max"], 0.05);
    assert_eq!(manifest["scenario"]["model"]["motility"]["kind"], "exp");
    assert_eq!(manifest["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "sub.toml", &SUBCRITICAL.replace("kind = \"bump\"", "kind = \"bump\"\nperturbation = 0.2"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&kslab(&["run", &cfg, "--out", a.to_str().unwrap()], &[])), 0);
    assert_eq!(code(&kslab(&["run", &cfg, "--out", b.to_str().unwrap()], &[("KSLAB_WORKERS", "3")])), 0);
    for file in ["diagnostics.csv", "manifest.json", "verdict.json", "snapshots/2.5.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    for (name, text) in [
        ("neg.toml", SUBCRITICAL.replace("horizon = 5.0", "horizon = -1.0")),
        ("key.toml", format!("{SUBCRITICAL}\n[extra]\nx = 1\n")),
        ("syntax.toml", "[grid\n".to_owned()),
    ] {
        let cfg = config(tmp.path(), name, &text);
        let res = kslab(&["run", &cfg, "--out", out], &[]);
        assert_eq!(code(&res), 2, "{name}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(code(&kslab(&["run", "/nonexistent/config.toml"], &[])), 1);
    assert_eq!(code(&kslab(&["frobnicate"], &[])), 2);
}

const PROBES: &str = r#"
horizon = 0.2
[grid]
geometry = { kind = "radial_disk", radius = 1.0 }
nx = 64
[scan]
data = "bump"
bump_width = 0.3
masses = [2.0, 4.0]
"#;

#[test]
fn bisect_with_mismatched_endpoints_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "p.toml", &PROBES.replace("horizon = 0.2", "horizon = 30.0"));
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    // both endpoints relax to the constant state, so the upper one is not Growing
    let res = kslab(&["bisect", &cfg, "--low", "2", "--high", "4", "--tol", "0.5", "--out", out], &[]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("expected Growing"));
    let res = kslab(&["bisect", &cfg, "--low", "4", "--high", "2", "--tol", "0.5", "--out", out], &[]);
    assert_eq!(code(&res), 2);
    let res = kslab(&["bisect", &cfg, "--out", out], &[]);
    assert_eq!(code(&res), 2);
}

#[test]
fn scan_reports_and_undecided_exit_4() {
    let tmp = TempDir::new().unwrap();
    // a short horizon leaves the bump relaxing, so neither rule fires
    let cfg = config(tmp.path(), "p.toml", PROBES);
    let out = tmp.path().join("o");
    let res = kslab(&["scan", &cfg, "--out", out.to_str().unwrap()], &[("KSLAB_WORKERS", "2")]);
    assert_eq!(code(&res), 4, "{}", String::from_utf8_lossy(&res.stderr));
    let lines: Vec<serde_json::Value> = fs::read_to_string(out.join("scan.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(lines.iter().all(|l| l["scenario"] == manifest["scenario_hash"]));
    assert_eq!(lines[0]["verdict"]["label"], "Undecided");
    assert!(out.join("probes/000/diagnostics.csv").exists());
    assert!(out.join("scan.csv").exists());

    let long = config(tmp.path(), "q.toml", &PROBES.replace("horizon = 0.2", "horizon = 60.0"));
    let out = tmp.path().join("q");
    assert_eq!(code(&kslab(&["scan", &long, "--out", out.to_str().unwrap()], &[])), 0);
    let csv = fs::read_to_string(out.join("scan.csv")).unwrap();
    assert_eq!(column(&csv, "label"), ["Bounded", "Bounded"]);
}

#[test]
fn bad_worker_override_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "p.toml", PROBES);
    let out = tmp.path().join("o");
    let res = kslab(&["scan", &cfg, "--out", out.to_str().unwrap()], &[("KSLAB_WORKERS", "0")]);
    assert_eq!(code(&res), 2);
}

#[test]
fn verify_table_decreases_with_dt() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
mass = 12.0
[grid]
geometry = { kind = "radial_disk", radius = 1.0 }
nx = 32
[initdata]
kind = "bump"
width = 0.5
v_level = 0.5
h_level = 1.0
[verify]
dt = 0.02
dt_levels = 3
h_levels = 2
horizon = 0.5
"#;
    let cfg = config(tmp.path(), "v.toml", text);
    let out = tmp.path().join("o");
    assert_eq!(code(&kslab(&["verify", &cfg, "--out", out.to_str().unwrap()], &[])), 0);
    let csv = fs::read_to_string(out.join("verify.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "nx,h,dt,R1,R2,energy_residual");
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for level in rows.chunks(3) {
        for w in level.windows(2) {
            assert!(w[1][3] < w[0][3] && w[1][4] < w[0][4] && w[1][5] < w[0][5], "{w:?}");
        }
    }
}

#[test]
fn initdata_writes_fields_and_sweep() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
mass = 31.41592653589793
[grid]
geometry = { kind = "radial_disk", radius = 1.0 }
nx = 512
[initdata]
kind = "blowup"
lambda = 16.0
r = 0.4
r1 = 0.2
"#;
    let cfg = config(tmp.path(), "b.toml", text);
    let out = tmp.path().join("o");
    let res = kslab(&["initdata", &cfg, "--out", out.to_str().unwrap(), "--sweep", "4,8,16,32"], &[]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stdout).contains("F = "));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("initdata.json")).unwrap()).unwrap();
    assert!((doc["mass"].as_f64().unwrap() - 10.0 * std::f64::consts::PI).abs() < 1e-8);
    assert!(doc["sweep"]["slope"].as_f64().unwrap() < 0.0);
    let sweep = fs::read_to_string(out.join("energy_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    assert_eq!(fs::read_to_string(out.join("initdata.csv")).unwrap().lines().count(), 513);

    let bump = config(tmp.path(), "c.toml", &text.replace("kind = \"blowup\"\nlambda = 16.0\nr = 0.4\nr1 = 0.2", "kind = \"bump\""));
    let res = kslab(&["initdata", &bump, "--out", out.to_str().unwrap(), "--sweep", "4,8"], &[]);
    assert_eq!(code(&res), 2);
}

#[test]
fn stationary_command() {
    let tmp = TempDir::new().unwrap();
    let text = "mass = 12.566370614359172\n[grid]\ngeometry = { kind = \"radial_disk\", radius = 1.0 }\nnx = 128\n";
    let cfg = config(tmp.path(), "s.toml", text);
    let out = tmp.path().join("o");
    assert_eq!(code(&kslab(&["stationary", &cfg, "--out", out.to_str().unwrap()], &[])), 0);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stationary.json")).unwrap()).unwrap();
    assert!(doc["residual"].as_f64().unwrap() <= 1e-8);
    let rect = config(tmp.path(), "r.toml", &text.replace("kind = \"radial_disk\", radius = 1.0", "kind = \"rectangle\", lx = 1.0, ly = 1.0"));
    assert_eq!(code(&kslab(&["stationary", &rect, "--out", out.to_str().unwrap()], &[])), 2);
}
