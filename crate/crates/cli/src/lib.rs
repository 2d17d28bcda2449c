//! `resmin-oc`: solve, refine, simulate and compare from the command line.
//!
//! Every command resolves and validates its whole configuration before the
//! output directory is touched, so a configuration error leaves no files.
//! Exit codes: 0 when every solve converged, 1 on solver or simulation
//! failure (a partial report is still written), 2 on configuration errors.

pub mod config;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use resmin_core::error_analysis::refine_loop;
use resmin_core::mesh::{DecisionData, Mesh, Scheme};
use resmin_core::ocp::OcpDefinition;
use resmin_core::pipeline::{run_pipeline, PipelineOutcome, Representation};
use resmin_core::problems::benchmark;
use resmin_core::residual::residual_at;
use resmin_core::sim::{simulate, SimOptions};
use resmin_core::trajectory::{ClosureMode, RepresentedTrajectory};

use crate::config::{output_dir, Cli, Command, CompareArgs, RunConfig, SimulateArgs};
use crate::output::{to_value, write_json};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] resmin_core::error::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => 2,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Solve(args) => RunConfig::resolve(args, false).and_then(|c| solve(&c)),
        Command::Refine(args) => RunConfig::resolve(args, true).and_then(|c| refine(&c)),
        Command::Simulate(args) => simulate_solution(&args),
        Command::Compare(args) => compare(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Everything needed to rebuild the represented trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub problem: String,
    pub params: Option<PathBuf>,
    pub scheme: Scheme,
    pub fractions: Vec<f64>,
    pub quadrature_order: usize,
    pub modes: Vec<SolutionMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionMode {
    pub mode: Representation,
    pub decision: DecisionData,
}

fn closure(mode: Representation) -> ClosureMode {
    match mode {
        Representation::Direct => ClosureMode::Direct,
        Representation::Resmin => ClosureMode::ContinuityClosed,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Seeded contract checks on each representation: dimensions, finiteness
/// and bitwise repeatability of evaluations at random times.
pub fn contract_checks(ocp: &OcpDefinition, outcome: &PipelineOutcome, seed: u64, samples: usize) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for m in &outcome.modes {
        let traj = &m.trajectory;
        for _ in 0..samples {
            let t = rng.random_range(traj.t0()..=traj.tf());
            let eval = || -> Option<(Vec<f64>, Vec<f64>, f64)> {
                Some((
                    traj.eval_state(t).ok()?,
                    traj.eval_input(t).ok()?,
                    residual_at(traj, ocp, t).ok()?,
                ))
            };
            let bits = |v: &(Vec<f64>, Vec<f64>, f64)| {
                let mut b: Vec<u64> = v.0.iter().chain(&v.1).map(|x| x.to_bits()).collect();
                b.push(v.2.to_bits());
                b
            };
            let problem = match (eval(), eval()) {
                (Some(a), Some(b)) => {
                    if a.0.len() != ocp.dims.states || a.1.len() != ocp.dims.inputs {
                        Some("dimension mismatch")
                    } else if !bits(&a).iter().all(|&b| f64::from_bits(b).is_finite()) {
                        Some("non-finite value")
                    } else if bits(&a) != bits(&b) {
                        Some("repeated evaluation differs")
                    } else {
                        None
                    }
                }
                _ => Some("evaluation failed"),
            };
            if let Some(p) = problem {
                failures.push(json!({"mode": m.mode.name(), "t": t, "failure": p}));
            }
        }
    }
    json!({
        "seed": seed,
        "samples_per_mode": samples,
        "passed": failures.is_empty(),
        "failures": failures,
    })
}

/// Write report.json, trajectories.csv and solution.json for a finished pipeline.
fn write_pipeline(config: &RunConfig, ocp: &OcpDefinition, mesh: &Mesh, outcome: &PipelineOutcome, extra: Option<(&str, Value)>) -> Result<(), CliError> {
    let checks = contract_checks(ocp, outcome, config.seed, 64);
    let mut report = report::pipeline_report(config, ocp, outcome, checks);
    if let Some((key, v)) = extra {
        report[key] = v;
    }
    write_json(&config.out.join("report.json"), &report)?;
    let modes: Vec<_> = outcome
        .modes
        .iter()
        .map(|m| (m.mode, &m.trajectory, &m.sim))
        .collect();
    report::trajectories(ocp, &modes).write(&config.out.join("trajectories.csv"))?;
    let solution = SolutionFile {
        problem: config.problem.clone(),
        params: config.params.clone(),
        scheme: mesh.scheme(),
        fractions: mesh.fractions().to_vec(),
        quadrature_order: mesh.quadrature_order(),
        modes: outcome
            .modes
            .iter()
            .map(|m| SolutionMode {
                mode: m.mode,
                decision: m.decision.clone(),
            })
            .collect(),
    };
    write_json(&config.out.join("solution.json"), &to_value(&solution))
}

fn exit_for(outcome: &PipelineOutcome) -> i32 {
    if outcome.converged() {
        0
    } else {
        1
    }
}

pub fn solve(config: &RunConfig) -> Result<i32, CliError> {
    let bench = config.benchmark()?;
    create_dir(&config.out)?;
    let clock = Instant::now();
    let outcome = match run_pipeline(&bench.ocp, &bench.mesh, &bench.guess, &config.pipeline_options()) {
        Ok(o) => o,
        Err(e) => {
            write_json(&config.out.join("report.json"), &report::failure_report(config, &e.to_string()))?;
            return Err(e.into());
        }
    };
    eprintln!(
        "collocation {:.3} s, resmin {:.3} s, total {:.3} s",
        outcome.collocation_time.as_secs_f64(),
        outcome.resmin_time.as_secs_f64(),
        clock.elapsed().as_secs_f64()
    );
    eprint!("{}", report::describe(&outcome));
    write_pipeline(config, &bench.ocp, &bench.mesh, &outcome, None)?;
    Ok(exit_for(&outcome))
}

pub fn refine(config: &RunConfig) -> Result<i32, CliError> {
    let bench = config.benchmark()?;
    let eta_tol = config.eta_tolerance.expect("validated");
    create_dir(&config.out)?;
    let options = config.pipeline_options();
    let clock = Instant::now();
    let refined = match refine_loop(&bench.ocp, &bench.mesh, &bench.guess, eta_tol, config.max_rounds, &options.nlp, &options.errors) {
        Ok(r) => r,
        Err(e) => {
            write_json(&config.out.join("report.json"), &report::failure_report(config, &e.to_string()))?;
            return Err(e.into());
        }
    };
    write_json(&config.out.join("meshes.json"), &report::meshes(&refined))?;
    eprintln!(
        "refinement {:?} after {} rounds, K = {}, {:.3} s",
        refined.status,
        refined.history.len(),
        refined.mesh.intervals(),
        clock.elapsed().as_secs_f64()
    );
    let outcome = match run_pipeline(&bench.ocp, &refined.mesh, &refined.decision, &options) {
        Ok(o) => o,
        Err(e) => {
            let mut r = report::failure_report(config, &e.to_string());
            r["refinement"] = report::refinement(config, &refined, None);
            write_json(&config.out.join("report.json"), &r)?;
            return Err(e.into());
        }
    };
    eprint!("{}", report::describe(&outcome));
    let summary = report::refinement(config, &refined, Some(&outcome));
    write_pipeline(config, &bench.ocp, &refined.mesh, &outcome, Some(("refinement", summary)))?;
    let rounds_converged = refined
        .history
        .iter()
        .all(|r| r.status == resmin_core::nlp::NlpStatus::Converged);
    Ok(if rounds_converged { exit_for(&outcome) } else { 1 })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Rebuild every stored representation and simulate it again.
pub fn simulate_solution(args: &SimulateArgs) -> Result<i32, CliError> {
    let solution: SolutionFile = read_json(&args.solution)?;
    let id = solution.problem.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    let ocp = benchmark(id, solution.params.as_deref())
        .map_err(|e| CliError::Config(format!("{e}")))?
        .ocp;
    let mesh = Mesh::new(solution.fractions.clone(), solution.scheme, solution.quadrature_order)
        .map_err(|e| CliError::Schema(format!("stored mesh: {e}")))?;
    let mut trajectories = Vec::new();
    for m in &solution.modes {
        let traj = RepresentedTrajectory::reconstruct(&m.decision, &mesh, &ocp, closure(m.mode))
            .map_err(|e| CliError::Schema(format!("stored {} solution: {e}", m.mode)))?;
        trajectories.push((m.mode, traj));
    }
    let out = output_dir(args.out.clone());
    create_dir(&out)?;
    let options = SimOptions::default();
    let mut sims = Vec::new();
    let mut report = serde_json::Map::new();
    for (mode, traj) in &trajectories {
        let x0 = traj.eval_state(traj.t0())?;
        let sim = simulate(&ocp, traj, &x0, &options)?;
        report.insert(
            mode.name().to_string(),
            json!({
                "complete": sim.complete,
                "message": sim.message,
                "steps": sim.steps,
                "rejections": sim.rejections,
                "discrepancy": to_value(&sim.discrepancy),
            }),
        );
        sims.push(sim);
    }
    write_json(&out.join("simulation.json"), &Value::Object(report))?;
    let mut table = report::table_for(&ocp);
    for ((mode, traj), sim) in trajectories.iter().zip(&sims) {
        report::simulation_rows(&mut table, &format!("sim_{}", mode.name()), traj, sim);
    }
    table.write(&out.join("simulation.csv"))?;
    Ok(if sims.iter().all(|s| s.complete) { 0 } else { 1 })
}

pub fn compare(args: &CompareArgs) -> Result<i32, CliError> {
    let a: Value = read_json(&args.first)?;
    let b: Value = read_json(&args.second)?;
    print!("{}", report::compare(&a, &b)?);
    Ok(0)
}

