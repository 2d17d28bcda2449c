//! Collocation solve followed by both representations, their error
//! metrics and validation simulations.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_analysis::{error_report, ErrorOptions, ErrorReport};
use crate::mesh::{DecisionData, Mesh};
use crate::nlp::NlpOptions;
use crate::ocp::OcpDefinition;
use crate::quadrature::gauss_legendre;
use crate::residual::{solve_resmin, trajectory_residual, ResidualReport, ResminSolution};
use crate::sim::{simulate, SimOptions, SimResult};
use crate::trajectory::{ClosureMode, RepresentedTrajectory};
use crate::transcription::{discrete_cost, solve_collocation, CollocationSolution};

/// How the continuous solution is obtained from the collocation result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Interpolation implied by the scheme, using the collocation values.
    Direct,
    /// Continuity-closed interpolation of the residual-minimizing values.
    Resmin,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Direct => "direct",
            Representation::Resmin => "resmin",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Representation::Direct),
            "resmin" => Ok(Representation::Resmin),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub nlp: NlpOptions,
    pub errors: ErrorOptions,
    pub sim: SimOptions,
    pub modes: Vec<Representation>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            nlp: NlpOptions::default(),
            errors: ErrorOptions::default(),
            sim: SimOptions::default(),
            modes: vec![Representation::Direct, Representation::Resmin],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub mode: Representation,
    pub decision: DecisionData,
    pub trajectory: RepresentedTrajectory,
    pub cost: f64,
    pub residual: ResidualReport,
    pub errors: ErrorReport,
    pub sim: SimResult,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub collocation: CollocationSolution,
    pub resmin: Option<ResminSolution>,
    pub modes: Vec<ModeOutcome>,
    pub collocation_time: Duration,
    pub resmin_time: Duration,
}

impl PipelineOutcome {
    pub fn mode(&self, mode: Representation) -> Option<&ModeOutcome> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// Every requested solve reached the KKT tolerance.
    pub fn converged(&self) -> bool {
        self.collocation.result.converged()
            && self
                .resmin
                .as_ref()
                .is_none_or(|r| r.result.converged())
    }
}

fn analyze(
    mode: Representation,
    z: &DecisionData,
    mesh: &Mesh,
    ocp: &OcpDefinition,
    options: &PipelineOptions,
) -> Result<ModeOutcome> {
    let closure = match mode {
        Representation::Direct => ClosureMode::Direct,
        Representation::Resmin => ClosureMode::ContinuityClosed,
    };
    let trajectory = RepresentedTrajectory::reconstruct(z, mesh, ocp, closure)?;
    let rule = gauss_legendre(mesh.quadrature_order())?;
    let residual = trajectory_residual(&trajectory, ocp, &rule);
    let errors = error_report(&trajectory, ocp, &options.errors)?;
    let x0 = trajectory.eval_state(trajectory.t0())?;
    let sim = simulate(ocp, &trajectory, &x0, &options.sim)?;
    Ok(ModeOutcome {
        mode,
        decision: z.clone(),
        cost: discrete_cost(z, mesh, ocp)?,
        trajectory,
        residual,
        errors,
        sim,
    })
}

/// Solve the collocation problem from `guess`, minimize the integrated
/// residual when requested, and analyze every requested representation.
pub fn run_pipeline(
    ocp: &OcpDefinition,
    mesh: &Mesh,
    guess: &DecisionData,
    options: &PipelineOptions,
) -> Result<PipelineOutcome> {
    let clock = Instant::now();
    let collocation = solve_collocation(ocp, mesh, guess, &options.nlp)?;
    let collocation_time = clock.elapsed();
    let clock = Instant::now();
    let resmin = if options.modes.contains(&Representation::Resmin) {
        Some(solve_resmin(
            ocp,
            mesh,
            &collocation.decision,
            collocation.cost,
            &options.nlp,
        )?)
    } else {
        None
    };
    let resmin_time = clock.elapsed();
    let mut modes = Vec::new();
    for &mode in &options.modes {
        let z = match mode {
            Representation::Direct => &collocation.decision,
            Representation::Resmin => &resmin.as_ref().expect("resmin solved").decision,
        };
        if modes.iter().any(|m: &ModeOutcome| m.mode == mode) {
            continue;
        }
        modes.push(analyze(mode, z, mesh, ocp, options)?);
    }
    Ok(PipelineOutcome {
        collocation,
        resmin,
        modes,
        collocation_time,
        resmin_time,
    })
}
