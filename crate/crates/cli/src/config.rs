//! Command-line arguments and the run configuration they resolve to.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use resmin_core::mesh::{Mesh, Scheme};
use resmin_core::nlp::NlpOptions;
use resmin_core::pipeline::{PipelineOptions, Representation};
use resmin_core::problems::{benchmark, Benchmark, ProblemId};
use resmin_core::transcription::default_guess;

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUTDIR_ENV: &str = "RESMIN_OC_OUTDIR";

const DEFAULT_OUTDIR: &str = "resmin-out";

#[derive(Debug, Parser)]
#[command(name = "resmin-oc", version, about = "Direct collocation with integrated residual minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve by collocation, build the requested representations, analyze and simulate them.
    Solve(RunArgs),
    /// Refine the mesh until the local error bound holds, then solve on the final mesh.
    Refine(RunArgs),
    /// Re-simulate the representations stored in a solution file.
    Simulate(SimulateArgs),
    /// Compare the key metrics of two reports.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// linear, robot_arm or windshear.
    #[arg(long)]
    pub problem: Option<String>,
    /// Parameter file replacing the built-in constants of robot_arm or windshear.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// euler, trapezoidal or hs.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Number of mesh intervals.
    #[arg(short = 'K', long = "intervals")]
    pub intervals: Option<usize>,
    /// Gauss points per interval for the integrated residual.
    #[arg(long)]
    pub nq: Option<usize>,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    /// Local error tolerance; required by refine.
    #[arg(long)]
    pub eta_tol: Option<f64>,
    /// Constraint violation tolerance; required by refine.
    #[arg(long)]
    pub eps_c_tol: Option<f64>,
    /// Refinement rounds.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Comma-separated representations: direct, resmin.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<String>>,
    /// Output directory; defaults to $RESMIN_OC_OUTDIR, then ./resmin-out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the randomized problem checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file whose fields override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// solution.json written by solve or refine.
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    pub first: PathBuf,
    pub second: PathBuf,
}

/// Every field of the run configuration, all optional; used for config files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Option<String>,
    pub params: Option<PathBuf>,
    pub scheme: Option<String>,
    pub intervals: Option<usize>,
    pub quadrature_order: Option<usize>,
    pub kkt_tolerance: Option<f64>,
    pub eta_tolerance: Option<f64>,
    pub constraint_tolerance: Option<f64>,
    pub max_rounds: Option<usize>,
    pub modes: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: String,
    pub params: Option<PathBuf>,
    pub scheme: Scheme,
    pub intervals: usize,
    pub quadrature_order: usize,
    pub kkt_tolerance: f64,
    pub eta_tolerance: Option<f64>,
    pub constraint_tolerance: Option<f64>,
    pub max_rounds: usize,
    pub modes: Vec<Representation>,
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR))
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_error(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Merge flags with the config file (file wins) and validate. `refine`
    /// requires both error tolerances.
    pub fn resolve(args: RunArgs, refine: bool) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => read_config(p)?,
            None => ConfigFile::default(),
        };
        let problem = file
            .problem
            .or(args.problem)
            .ok_or_else(|| config_error("--problem is required"))?;
        let problem_id: ProblemId = problem.parse().map_err(|e| config_error(format!("{e}")))?;
        let scheme: Scheme = match file.scheme.or(args.scheme) {
            Some(s) => s.parse().map_err(|e| config_error(format!("{e}")))?,
            None => Scheme::HermiteSimpson,
        };
        let default_k = match problem_id {
            ProblemId::Windshear => 15,
            _ => 10,
        };
        let intervals = file.intervals.or(args.intervals).unwrap_or(default_k);
        if intervals == 0 {
            return Err(config_error("K must be at least 1"));
        }
        let quadrature_order = file
            .quadrature_order
            .or(args.nq)
            .unwrap_or_else(|| scheme.default_quadrature_order());
        let kkt_tolerance = positive(
            "kkt tolerance",
            file.kkt_tolerance.or(args.kkt_tol).unwrap_or(NlpOptions::default().kkt_tolerance),
        )?;
        let eta_tolerance = file.eta_tolerance.or(args.eta_tol).map(|v| positive("eta tolerance", v)).transpose()?;
        let constraint_tolerance = file
            .constraint_tolerance
            .or(args.eps_c_tol)
            .map(|v| positive("constraint tolerance", v))
            .transpose()?;
        if refine && (eta_tolerance.is_none() || constraint_tolerance.is_none()) {
            return Err(config_error("refine requires --eta-tol and --eps-c-tol"));
        }
        let max_rounds = file.max_rounds.or(args.max_rounds).unwrap_or(10);
        if max_rounds == 0 {
            return Err(config_error("max rounds must be at least 1"));
        }
        let modes = match file.modes.or(args.modes) {
            Some(list) => {
                let mut modes = Vec::new();
                for m in list {
                    let r: Representation = m.trim().parse().map_err(|e| config_error(format!("{e}")))?;
                    if !modes.contains(&r) {
                        modes.push(r);
                    }
                }
                if modes.is_empty() {
                    return Err(config_error("at least one mode is required"));
                }
                modes
            }
            None => vec![Representation::Direct, Representation::Resmin],
        };
        Ok(Self {
            problem: problem_id.name().to_string(),
            params: file.params.or(args.params),
            scheme,
            intervals,
            quadrature_order,
            kkt_tolerance,
            eta_tolerance,
            constraint_tolerance,
            max_rounds,
            modes,
            out: output_dir(file.out.or(args.out)),
            seed: file.seed.or(args.seed).unwrap_or(0),
        })
    }

    pub fn problem_id(&self) -> ProblemId {
        self.problem.parse().expect("validated problem id")
    }

    /// The problem on the configured mesh with the default guess.
    pub fn benchmark(&self) -> Result<Benchmark, CliError> {
        let b = benchmark(self.problem_id(), self.params.as_deref())
            .map_err(|e| config_error(format!("{e}")))?;
        let mesh = Mesh::uniform(self.intervals, self.scheme)
            .and_then(|m| m.with_quadrature_order(self.quadrature_order))
            .map_err(|e| config_error(format!("{e}")))?;
        let guess = default_guess(&b.ocp, &mesh);
        Ok(Benchmark {
            ocp: b.ocp,
            mesh,
            guess,
        })
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            nlp: NlpOptions {
                kkt_tolerance: self.kkt_tolerance,
                ..NlpOptions::default()
            },
            modes: self.modes.clone(),
            ..PipelineOptions::default()
        }
    }
}
