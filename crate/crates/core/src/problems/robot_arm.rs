use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::{Mesh, Scheme};
use crate::ocp::{
    BoxBounds, Dimensions, Hints, OcpDefinition, OcpFunctions, SimpleBounds, TimeMode,
};
use crate::transcription::default_guess;

use super::{check_count, load_params, parse_params, require, Benchmark};

const DEFAULT: &str = include_str!("../../data/robot_arm.json");

/// Coefficients of the equations of motion of the two-link arm, for the
/// beam and payload properties of the owning parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmDynamics {
    pub inertia_base: f64,
    pub inertia_sin2: f64,
    pub centripetal_cos: f64,
    pub coriolis_first: f64,
    pub coriolis_second: f64,
    pub torque_difference: f64,
    pub torque_second: f64,
    pub torque_cross: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotArmParams {
    pub version: u32,
    pub beam_mass: f64,
    pub beam_length: f64,
    pub payload_mass: f64,
    pub regularization: f64,
    pub dynamics: ArmDynamics,
    /// `[w_phi, w_psi, phi, chi]` at `t = 0` and at the final time.
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub final_time_lower: f64,
    pub final_time_upper: f64,
    pub mesh_intervals: usize,
}

impl Default for RobotArmParams {
    fn default() -> Self {
        parse_params(DEFAULT, "robot_arm.json").expect("bundled robot arm parameters")
    }
}

impl RobotArmParams {
    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = load_params(path)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.beam_mass > 0.0 && self.beam_length > 0.0 && self.payload_mass > 0.0,
            "masses and length must be positive",
        )?;
        require(
            self.regularization >= 0.0,
            "regularization must be non-negative",
        )?;
        require(
            self.dynamics.inertia_base > 0.0,
            "inertia_base must be positive",
        )?;
        check_count("initial_state", &self.initial_state, 4)?;
        check_count("final_state", &self.final_state, 4)?;
        check_count("input_lower", &self.input_lower, 2)?;
        check_count("input_upper", &self.input_upper, 2)?;
        require(
            self.final_time_lower > 0.0 && self.final_time_lower <= self.final_time_upper,
            "final time bounds must satisfy 0 < lower <= upper",
        )?;
        require(
            self.mesh_intervals >= 1,
            "mesh_intervals must be at least 1",
        )
    }
}

struct Arm {
    c: ArmDynamics,
    regularization: f64,
    x0: Vec<f64>,
    xf: Vec<f64>,
}

impl OcpFunctions for Arm {
    fn dynamics(&self, x: &[f64], u: &[f64], _t: f64, _p: &[f64], dx: &mut [f64]) {
        let c = &self.c;
        let (wphi, wpsi, chi) = (x[0], x[1], x[3]);
        let (s, co) = chi.sin_cos();
        let den = c.inertia_base + c.inertia_sin2 * s * s;
        dx[0] = (s * (c.centripetal_cos * co * wphi * wphi + c.coriolis_first * wpsi * wpsi)
            + c.torque_difference * (u[0] - u[1])
            - c.torque_cross * co * u[1])
            / den;
        dx[1] = -(s * (c.centripetal_cos * co * wpsi * wpsi + c.coriolis_second * wphi * wphi)
            - c.torque_second * u[1]
            + c.torque_cross * co * (u[0] - u[1]))
            / den;
        dx[2] = wphi;
        dx[3] = wpsi - wphi;
    }

    fn lagrange_cost(&self, _x: &[f64], u: &[f64], _t: f64, _p: &[f64]) -> f64 {
        self.regularization * (u[0] * u[0] + u[1] * u[1])
    }

    fn mayer_cost(&self, _x0: &[f64], _t0: f64, _xf: &[f64], tf: f64, _p: &[f64]) -> f64 {
        tf
    }

    fn boundary(&self, x0: &[f64], _t0: f64, xf: &[f64], _tf: f64, _p: &[f64], out: &mut [f64]) {
        for q in 0..4 {
            out[q] = x0[q] - self.x0[q];
            out[4 + q] = xf[q] - self.xf[q];
        }
    }
}

/// Minimum-time repositioning of a payload by a two-link arm, states
/// `[w_phi, w_psi, phi, chi]`, torque inputs `[u1, u2]`, free final time and
/// cost `tf + r * integral(u1^2 + u2^2)`.
pub fn two_link_robot_arm(params: &RobotArmParams) -> Result<Benchmark> {
    params.validate()?;
    let dims = Dimensions {
        states: 4,
        inputs: 2,
        params: 0,
        path: 0,
        boundary: 8,
    };
    let bounds = SimpleBounds {
        state: BoxBounds::unbounded(4),
        input: BoxBounds::new(params.input_lower.clone(), params.input_upper.clone()),
        param: BoxBounds::unbounded(0),
    };
    let f = Arm {
        c: params.dynamics.clone(),
        regularization: params.regularization,
        x0: params.initial_state.clone(),
        xf: params.final_state.clone(),
    };
    let time = TimeMode::FreeFinal {
        t0: 0.0,
        tf_lower: params.final_time_lower,
        tf_upper: params.final_time_upper,
    };
    let ocp = OcpDefinition::new("robot_arm", dims, Arc::new(f), bounds, time)?
        .with_names(&["omega_phi", "omega_psi", "phi", "chi"], &["u1", "u2"])
        .with_hints(Hints {
            initial_state: Some(params.initial_state.clone()),
            final_state: Some(params.final_state.clone()),
            ..Hints::default()
        });
    let mesh = Mesh::uniform(params.mesh_intervals, Scheme::HermiteSimpson)?;
    let guess = default_guess(&ocp, &mesh);
    Ok(Benchmark { ocp, mesh, guess })
}
