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

const DEFAULT: &str = include_str!("../../data/windshear.json");

/// Shape coefficients of the horizontal and vertical wind fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindParams {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub reference_altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindshearParams {
    pub version: u32,
    pub weight: f64,
    pub gravity: f64,
    pub air_density: f64,
    pub wing_area: f64,
    pub thrust_inclination: f64,
    /// Maximum thrust `A0 + A1 V + A2 V^2`.
    pub thrust_coefficients: Vec<f64>,
    /// Power setting `min(1, initial + rate * t)`.
    pub thrust_ramp_initial: f64,
    pub thrust_ramp_rate: f64,
    /// `C_D = B0 + B1 a + B2 a^2`.
    pub drag_coefficients: Vec<f64>,
    /// `C_L = C0 + C1 a`, plus `C2 (a - a*)^2` above `a*`.
    pub lift_coefficients: Vec<f64>,
    pub lift_stall_coefficient: f64,
    pub lift_stall_angle: f64,
    pub wind: WindParams,
    /// `[d, h, V, gamma, alpha]` at `t = 0`.
    pub initial_state: Vec<f64>,
    pub final_flight_path_angle: f64,
    pub final_time: f64,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    /// Bound on the magnitude of the angle of attack rate.
    pub rate_bound: f64,
    pub min_altitude_lower: f64,
    pub min_altitude_upper: f64,
    pub guess_final_state: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub rate_scale: f64,
    pub min_altitude_scale: f64,
    pub mesh_intervals: usize,
}

impl Default for WindshearParams {
    fn default() -> Self {
        parse_params(DEFAULT, "windshear.json").expect("bundled windshear parameters")
    }
}

impl WindshearParams {
    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = load_params(path)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.weight > 0.0
                && self.gravity > 0.0
                && self.air_density > 0.0
                && self.wing_area > 0.0,
            "weight, gravity, density and wing area must be positive",
        )?;
        check_count("thrust_coefficients", &self.thrust_coefficients, 3)?;
        check_count("drag_coefficients", &self.drag_coefficients, 3)?;
        check_count("lift_coefficients", &self.lift_coefficients, 2)?;
        check_count("initial_state", &self.initial_state, 5)?;
        check_count("guess_final_state", &self.guess_final_state, 5)?;
        check_count("state_lower", &self.state_lower, 5)?;
        check_count("state_upper", &self.state_upper, 5)?;
        check_count("state_scale", &self.state_scale, 5)?;
        require(
            self.state_scale.iter().all(|s| *s > 0.0)
                && self.rate_scale > 0.0
                && self.min_altitude_scale > 0.0,
            "scales must be positive",
        )?;
        require(
            self.wind.reference_altitude > 0.0,
            "reference_altitude must be positive",
        )?;
        require(self.final_time > 0.0, "final_time must be positive")?;
        require(self.rate_bound > 0.0, "rate_bound must be positive")?;
        require(
            self.min_altitude_lower <= self.min_altitude_upper,
            "min_altitude bounds inverted",
        )?;
        require(
            self.mesh_intervals >= 1,
            "mesh_intervals must be at least 1",
        )
    }
}

struct Aircraft {
    p: WindshearParams,
    mass: f64,
}

impl Aircraft {
    /// Horizontal wind shape and its derivative in distance.
    fn horizontal(&self, x: f64) -> (f64, f64) {
        let WindParams { a, b, .. } = self.p.wind;
        if x <= 500.0 {
            (
                -50.0 + a * x.powi(3) + b * x.powi(4),
                3.0 * a * x * x + 4.0 * b * x.powi(3),
            )
        } else if x <= 4100.0 {
            ((x - 2300.0) / 40.0, 1.0 / 40.0)
        } else if x <= 4600.0 {
            let y = 4600.0 - x;
            (
                50.0 - a * y.powi(3) - b * y.powi(4),
                3.0 * a * y * y + 4.0 * b * y.powi(3),
            )
        } else {
            (50.0, 0.0)
        }
    }

    /// Vertical wind shape and its derivative in distance.
    fn vertical(&self, x: f64) -> (f64, f64) {
        let WindParams { c, d, e, .. } = self.p.wind;
        if x <= 500.0 {
            (
                d * x.powi(3) + e * x.powi(4),
                3.0 * d * x * x + 4.0 * e * x.powi(3),
            )
        } else if x <= 4100.0 {
            let y = x - 2300.0;
            let g = -51.0 * (-c * y.powi(4)).exp();
            (g, -4.0 * c * y.powi(3) * g)
        } else if x <= 4600.0 {
            let y = 4600.0 - x;
            (
                d * y.powi(3) + e * y.powi(4),
                -3.0 * d * y * y - 4.0 * e * y.powi(3),
            )
        } else {
            (0.0, 0.0)
        }
    }

    fn thrust(&self, v: f64, t: f64) -> f64 {
        let a = &self.p.thrust_coefficients;
        let beta = (self.p.thrust_ramp_initial + self.p.thrust_ramp_rate * t).min(1.0);
        beta * (a[0] + a[1] * v + a[2] * v * v)
    }

    fn lift_drag(&self, v: f64, alpha: f64) -> (f64, f64) {
        let (b, c) = (&self.p.drag_coefficients, &self.p.lift_coefficients);
        let cd = b[0] + b[1] * alpha + b[2] * alpha * alpha;
        let mut cl = c[0] + c[1] * alpha;
        if alpha > self.p.lift_stall_angle {
            cl += self.p.lift_stall_coefficient * (alpha - self.p.lift_stall_angle).powi(2);
        }
        let q = 0.5 * self.p.air_density * self.p.wing_area * v * v;
        (cl * q, cd * q)
    }
}

impl OcpFunctions for Aircraft {
    fn dynamics(&self, x: &[f64], u: &[f64], t: f64, _p: &[f64], dx: &mut [f64]) {
        let (d, h, v, gamma, alpha) = (x[0], x[1], x[2], x[3], x[4]);
        let k = self.p.wind.intensity;
        let hs = self.p.wind.reference_altitude;
        let g = self.p.gravity;
        let (ad, dad) = self.horizontal(d);
        let (bd, dbd) = self.vertical(d);
        let (sg, cg) = gamma.sin_cos();
        let dd = v * cg + k * ad;
        let dh = v * sg + k * h / hs * bd;
        let wd_rate = k * dad * dd;
        let wh_rate = k * (h / hs * dbd * dd + bd / hs * dh);
        let thrust = self.thrust(v, t);
        let (lift, drag) = self.lift_drag(v, alpha);
        let (sa, ca) = (alpha + self.p.thrust_inclination).sin_cos();
        dx[0] = dd;
        dx[1] = dh;
        dx[2] = (thrust * ca - drag) / self.mass - g * sg - (wd_rate * cg + wh_rate * sg);
        dx[3] =
            (thrust * sa + lift) / (self.mass * v) - g * cg / v + (wd_rate * sg - wh_rate * cg) / v;
        dx[4] = u[0];
    }

    fn mayer_cost(&self, _x0: &[f64], _t0: f64, _xf: &[f64], _tf: f64, p: &[f64]) -> f64 {
        -p[0]
    }

    fn path_constraint(&self, x: &[f64], _u: &[f64], _t: f64, p: &[f64], out: &mut [f64]) {
        out[0] = p[0] - x[1];
    }

    fn boundary(&self, x0: &[f64], _t0: f64, xf: &[f64], _tf: f64, _p: &[f64], out: &mut [f64]) {
        for q in 0..5 {
            out[q] = x0[q] - self.p.initial_state[q];
        }
        out[5] = xf[3] - self.p.final_flight_path_angle;
    }
}

/// Aircraft go-around through a downburst: states `[d, h, V, gamma, alpha]`,
/// input the angle of attack rate, static parameter the minimum altitude,
/// which is maximized subject to `h(t) >= h_min`.
pub fn windshear_problem(params: &WindshearParams) -> Result<Benchmark> {
    params.validate()?;
    let dims = Dimensions {
        states: 5,
        inputs: 1,
        params: 1,
        path: 1,
        boundary: 6,
    };
    let bounds = SimpleBounds {
        state: BoxBounds::new(params.state_lower.clone(), params.state_upper.clone()),
        input: BoxBounds::new(vec![-params.rate_bound], vec![params.rate_bound]),
        param: BoxBounds::new(
            vec![params.min_altitude_lower],
            vec![params.min_altitude_upper],
        ),
    };
    let f = Aircraft {
        mass: params.weight / params.gravity,
        p: params.clone(),
    };
    let time = TimeMode::Fixed {
        t0: 0.0,
        tf: params.final_time,
    };
    let ocp = OcpDefinition::new("windshear", dims, Arc::new(f), bounds, time)?
        .with_names(&["d", "h", "V", "gamma", "alpha"], &["nu"])
        .with_hints(Hints {
            initial_state: Some(params.initial_state.clone()),
            final_state: Some(params.guess_final_state.clone()),
            state_scale: Some(params.state_scale.clone()),
            input_scale: Some(vec![params.rate_scale]),
            param_scale: Some(vec![params.min_altitude_scale]),
        });
    let mesh = Mesh::uniform(params.mesh_intervals, Scheme::HermiteSimpson)?;
    let guess = default_guess(&ocp, &mesh);
    Ok(Benchmark { ocp, mesh, guess })
}
