//! Benchmark problems: a scalar linear problem with a closed-form solution,
//! the two-link robot arm and the aircraft go-around in windshear.
//!
//! The two benchmarks read their constants from JSON parameter files; the
//! defaults are compiled in and an alternative file can be supplied.

mod linear;
mod robot_arm;
mod windshear;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::mesh::{DecisionData, Mesh};
use crate::ocp::OcpDefinition;

pub use linear::{linear_problem, LinearProblem};
pub use robot_arm::{two_link_robot_arm, RobotArmParams};
pub use windshear::{windshear_problem, WindParams, WindshearParams};

/// A problem with its default mesh and initial guess.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub ocp: OcpDefinition,
    pub mesh: Mesh,
    pub guess: DecisionData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemId {
    Linear,
    RobotArm,
    Windshear,
}

impl ProblemId {
    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Linear => "linear",
            ProblemId::RobotArm => "robot_arm",
            ProblemId::Windshear => "windshear",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" => Ok(ProblemId::Linear),
            "robot_arm" | "robot" => Ok(ProblemId::RobotArm),
            "windshear" => Ok(ProblemId::Windshear),
            other => Err(Error::Parameters(format!("unknown problem '{other}'"))),
        }
    }
}

/// Build a benchmark, reading its parameters from `params` when given.
/// The linear problem takes no parameter file.
pub fn benchmark(id: ProblemId, params: Option<&Path>) -> Result<Benchmark> {
    match (id, params) {
        (ProblemId::Linear, None) => linear_problem(-1.0).benchmark(10),
        (ProblemId::Linear, Some(p)) => Err(Error::ParameterFile {
            path: p.display().to_string(),
            reason: "the linear problem takes no parameter file".into(),
        }),
        (ProblemId::RobotArm, None) => two_link_robot_arm(&RobotArmParams::default()),
        (ProblemId::RobotArm, Some(p)) => two_link_robot_arm(&RobotArmParams::load(p)?),
        (ProblemId::Windshear, None) => windshear_problem(&WindshearParams::default()),
        (ProblemId::Windshear, Some(p)) => windshear_problem(&WindshearParams::load(p)?),
    }
}

pub(crate) fn parse_params<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::ParameterFile {
        path: origin.to_string(),
        reason: e.to_string(),
    })
}

pub(crate) fn load_params<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ParameterFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_params(&text, &path.display().to_string())
}

pub(crate) fn require(ok: bool, what: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Parameters(what.into()))
    }
}

pub(crate) fn check_count(name: &str, v: &[f64], n: usize) -> Result<()> {
    require(
        v.len() == n && v.iter().all(|x| x.is_finite()),
        format!("{name} must hold {n} finite values, got {:?}", v),
    )
}
