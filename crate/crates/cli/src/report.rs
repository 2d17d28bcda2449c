//! Report assembly, trajectory tables and report comparison.

use serde_json::{json, Map, Value};

use resmin_core::error_analysis::RefineOutcome;
use resmin_core::nlp::NlpResult;
use resmin_core::ocp::OcpDefinition;
use resmin_core::pipeline::{ModeOutcome, PipelineOutcome, Representation};
use resmin_core::sim::SimResult;
use resmin_core::trajectory::RepresentedTrajectory;

use crate::config::RunConfig;
use crate::output::{format_float, to_value, Table};
use crate::CliError;

/// Metrics shown by `compare`, in display order.
pub const SUMMARY_FIELDS: [&str; 5] = ["J_c", "R", "max_eta", "max_violation", "max_discrepancy"];

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn solver(result: &NlpResult) -> Value {
    json!({
        "status": to_value(&result.status),
        "iterations": result.iterations,
        "objective": result.objective,
        "stationarity": result.stationarity,
        "max_equality_violation": result.max_equality_violation,
        "max_inequality_violation": result.max_inequality_violation,
        "message": result.message,
    })
}

fn summary(j_c: f64, m: &ModeOutcome) -> Value {
    json!({
        "mode": m.mode.name(),
        "J_c": j_c,
        "R": m.residual.total,
        "max_eta": m.errors.local.max_eta(),
        "max_violation": max_of(&m.errors.max_constraint_violation),
        "max_discrepancy": max_of(&m.sim.discrepancy.max_deviation),
    })
}

fn simulation(sim: &SimResult) -> Value {
    json!({
        "complete": sim.complete,
        "message": sim.message,
        "steps": sim.steps,
        "rejections": sim.rejections,
        "max_deviation": sim.discrepancy.max_deviation,
        "integrated_deviation": sim.discrepancy.integrated_deviation,
    })
}

fn mode(j_c: f64, m: &ModeOutcome) -> Value {
    let k = m.trajectory.mesh().intervals();
    json!({
        "summary": summary(j_c, m),
        "cost": m.cost,
        "tf": m.decision.tf,
        "residual": to_value(&m.residual),
        "local_error": {
            "max_eta": m.errors.local.max_eta(),
            "interval_max_eta": m.errors.local.interval_eta(k),
            "table": to_value(&m.errors.local),
        },
        "max_constraint_violation": m.errors.max_constraint_violation,
        "input_total_variation": m.sim.discrepancy.input_total_variation,
        "simulation": simulation(&m.sim),
    })
}

fn primary(outcome: &PipelineOutcome) -> Option<&ModeOutcome> {
    outcome
        .mode(Representation::Resmin)
        .or_else(|| outcome.modes.first())
}

/// Full report of a pipeline run. `checks` holds the seeded contract checks.
pub fn pipeline_report(config: &RunConfig, ocp: &OcpDefinition, outcome: &PipelineOutcome, checks: Value) -> Value {
    let j_c = outcome.collocation.cost;
    let mut modes = Map::new();
    for m in &outcome.modes {
        modes.insert(m.mode.name().to_string(), mode(j_c, m));
    }
    let mut solvers = Map::new();
    solvers.insert("collocation".into(), solver(&outcome.collocation.result));
    if let Some(r) = &outcome.resmin {
        let mut s = solver(&r.result);
        s["reverted"] = json!(r.reverted);
        solvers.insert("resmin".into(), s);
    }
    json!({
        "config": to_value(config),
        "problem": {
            "name": ocp.name,
            "states": ocp.state_names,
            "inputs": ocp.input_names,
        },
        "converged": outcome.converged(),
        "J_c": j_c,
        "summary": primary(outcome).map(|m| summary(j_c, m)).unwrap_or(Value::Null),
        "modes": modes,
        "solvers": solvers,
        "checks": checks,
    })
}

/// Report written when the pipeline aborted before producing results.
pub fn failure_report(config: &RunConfig, error: &str) -> Value {
    json!({
        "config": to_value(config),
        "converged": false,
        "error": error,
    })
}

pub fn refinement(config: &RunConfig, refine: &RefineOutcome, outcome: Option<&PipelineOutcome>) -> Value {
    let violation = outcome
        .and_then(primary)
        .map(|m| max_of(&m.errors.max_constraint_violation));
    let tol = config.constraint_tolerance.unwrap_or(f64::NAN);
    json!({
        "status": to_value(&refine.status),
        "rounds": refine.history.len(),
        "intervals": refine.mesh.intervals(),
        "eta_tolerance": config.eta_tolerance,
        "constraint_tolerance": config.constraint_tolerance,
        "max_constraint_violation": violation,
        "constraint_tolerance_met": violation.map(|v| v <= tol),
    })
}

pub fn meshes(refine: &RefineOutcome) -> Value {
    json!({
        "status": to_value(&refine.status),
        "history": to_value(&refine.history),
        "final": {
            "scheme": to_value(&refine.mesh.scheme()),
            "fractions": refine.mesh.fractions(),
            "quadrature_order": refine.mesh.quadrature_order(),
        },
    })
}

fn trajectory_rows(table: &mut Table, label: &str, traj: &RepresentedTrajectory, times: &[f64]) {
    for &t in times {
        let mut row = vec![t];
        match (traj.eval_state(t), traj.eval_input(t)) {
            (Ok(x), Ok(u)) => {
                row.extend(x);
                row.extend(u);
            }
            _ => row.extend(std::iter::repeat_n(f64::NAN, traj.states() + traj.inputs())),
        }
        table.row(label, &row);
    }
}

/// Simulated states with the applied input.
pub fn simulation_rows(table: &mut Table, label: &str, traj: &RepresentedTrajectory, sim: &SimResult) {
    for (t, x) in sim.times.iter().zip(&sim.states) {
        let mut row = vec![*t];
        row.extend(x);
        match traj.eval_input(*t) {
            Ok(u) => row.extend(u),
            Err(_) => row.extend(std::iter::repeat_n(f64::NAN, traj.inputs())),
        }
        table.row(label, &row);
    }
}

pub fn table_for(ocp: &OcpDefinition) -> Table {
    let cols = ["series", "t"]
        .into_iter()
        .map(String::from)
        .chain(ocp.state_names.iter().cloned())
        .chain(ocp.input_names.iter().cloned());
    Table::new(cols)
}

/// Representations and their simulations on the simulation output grid.
pub fn trajectories(ocp: &OcpDefinition, modes: &[(Representation, &RepresentedTrajectory, &SimResult)]) -> Table {
    let mut table = table_for(ocp);
    for (mode, traj, sim) in modes {
        trajectory_rows(&mut table, mode.name(), traj, &dense_grid(traj, sim));
    }
    for (mode, traj, sim) in modes {
        simulation_rows(&mut table, &format!("sim_{}", mode.name()), traj, sim);
    }
    table
}

/// The simulation grid, or the full horizon grid when the simulation stopped early.
fn dense_grid(traj: &RepresentedTrajectory, sim: &SimResult) -> Vec<f64> {
    if sim.complete {
        return sim.times.clone();
    }
    let bounds = traj.interval_times();
    let per = 100;
    let mut times = vec![bounds[0]];
    for w in bounds.windows(2) {
        times.extend((1..per).map(|j| w[0] + (w[1] - w[0]) * j as f64 / per as f64));
        times.push(w[1]);
    }
    times
}

/// Side-by-side table of the summary metrics of two reports.
pub fn compare(a: &Value, b: &Value) -> Result<String, CliError> {
    let fetch = |r: &Value, which: &str| -> Result<Vec<Option<f64>>, CliError> {
        let s = r
            .get("summary")
            .filter(|s| s.is_object())
            .ok_or_else(|| CliError::Schema(format!("{which}: missing field 'summary'")))?;
        SUMMARY_FIELDS
            .iter()
            .map(|f| match s.get(*f) {
                None => Err(CliError::Schema(format!("{which}: missing field 'summary.{f}'"))),
                Some(Value::Null) => Ok(None),
                Some(v) => v
                    .as_f64()
                    .map(Some)
                    .ok_or_else(|| CliError::Schema(format!("{which}: field 'summary.{f}' is not a number"))),
            })
            .collect()
    };
    let va = fetch(a, "first report")?;
    let vb = fetch(b, "second report")?;
    let same = va
        .iter()
        .zip(&vb)
        .all(|(x, y)| x.map(f64::to_bits) == y.map(f64::to_bits));
    if same {
        return Ok("no differences\n".to_string());
    }
    let show = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "nan".into());
    let mode = |r: &Value| r["summary"]["mode"].as_str().unwrap_or("?").to_string();
    let mut out = format!("{:<16} {:>14} {:>14} {:>12}\n", "metric", mode(a), mode(b), "A/B");
    for (i, f) in SUMMARY_FIELDS.iter().enumerate() {
        let factor = match (va[i], vb[i]) {
            (Some(x), Some(y)) if y != 0.0 => format!("{:.4e}", x / y),
            (Some(x), Some(y)) if x == y => format!("{:.4e}", 1.0),
            _ => "-".into(),
        };
        out.push_str(&format!("{:<16} {:>14} {:>14} {:>12}\n", f, show(va[i]), show(vb[i]), factor));
    }
    Ok(out)
}

/// Short human-readable line per mode.
pub fn describe(outcome: &PipelineOutcome) -> String {
    let mut out = String::new();
    for m in &outcome.modes {
        out.push_str(&format!(
            "{:<7} R {}  max eta {}  max deviation {}\n",
            m.mode.name(),
            format_float(m.residual.total),
            format_float(m.errors.local.max_eta()),
            format_float(max_of(&m.sim.discrepancy.max_deviation)),
        ));
    }
    out
}
