//! CSV and JSON artifacts. Floats are written with 17 significant digits so
//! that every value round-trips to the same double.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kslab_core::diagnostics::DiagnosticsRecord;
use kslab_core::experiments::TrajectoryVerdict;
use kslab_core::stepper::State;
use serde_json::{json, Value};

use crate::error::HarnessError;

pub const DIAGNOSTICS_HEADER: &str = "t,dt,mass,u_l2,u_linf,v_l2,v_linf,gradv_l2,gradv_linf,h_l1,h_linf,F,D,R1,R2";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(256 * (records.len() + 1));
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        let fixed = [r.t, r.dt, r.mass, r.u_l2, r.u_linf, r.v_l2, r.v_linf, r.gradv_l2, r.gradv_linf, r.h_l1, r.h_linf];
        let cells: Vec<String> = fixed
            .iter()
            .map(|&x| num(x))
            .chain([r.energy, r.dissipation, r.r1, r.r2].map(opt))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Node coordinates (`x`, `x,y` or `r`) followed by `u,v,h`.
pub fn snapshot_csv(state: &State) -> String {
    let grid = state.grid();
    let coords = if grid.geometry().is_radial() {
        "r"
    } else if grid.dimension() == 2 {
        "x,y"
    } else {
        "x"
    };
    let mut out = format!("{coords},u,v,h\n");
    for (i, p) in grid.coords().iter().enumerate() {
        let head = if grid.dimension() == 2 && !grid.geometry().is_radial() {
            format!("{},{}", num(p[0]), num(p[1]))
        } else {
            num(p[0])
        };
        let _ = writeln!(
            out,
            "{head},{},{},{}",
            num(state.u.values()[i]),
            num(state.v.values()[i]),
            num(state.h.values()[i])
        );
    }
    out
}

/// File name of the snapshot at time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("{t}.csv")
}

pub fn verdict_json(verdict: &TrajectoryVerdict) -> Value {
    json!({
        "label": verdict.label.to_string(),
        "peak": verdict.peak,
        "growth_factor": verdict.growth_factor,
        "trend_slope": verdict.trend_slope,
        "final_variation": verdict.final_variation,
    })
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    fs::write(path, contents).map_err(HarnessError::io(path))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    write(path, text)
}

/// One JSON document per line.
pub fn write_jsonl(path: &Path, rows: &[Value]) -> Result<(), HarnessError> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).expect("json value serializes"));
        text.push('\n');
    }
    write(path, text)
}
