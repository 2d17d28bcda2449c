use std::sync::Arc;

use crate::error::Result;
use crate::mesh::{Mesh, Scheme};
use crate::ocp::{BoxBounds, Dimensions, OcpDefinition, OcpFunctions, SimpleBounds, TimeMode};
use crate::transcription::default_guess;

use super::Benchmark;

struct Linear {
    a: f64,
    reference: f64,
    weight: f64,
}

impl OcpFunctions for Linear {
    fn dynamics(&self, x: &[f64], u: &[f64], _t: f64, _p: &[f64], dx: &mut [f64]) {
        dx[0] = self.a * x[0] + u[0];
    }

    fn lagrange_cost(&self, x: &[f64], u: &[f64], _t: f64, _p: &[f64]) -> f64 {
        (x[0] - self.reference).powi(2) + self.weight * u[0] * u[0]
    }

    fn boundary(&self, x0: &[f64], _t0: f64, _xf: &[f64], _tf: f64, _p: &[f64], out: &mut [f64]) {
        out[0] = x0[0];
    }
}

/// `x' = a x + u` on `[0, 1]` with `x(0) = 0` and running cost
/// `(x - 1)^2 + 1e-3 u^2`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub a: f64,
    pub ocp: OcpDefinition,
}

pub fn linear_problem(a: f64) -> LinearProblem {
    LinearProblem::with_input_bounds(a, f64::NEG_INFINITY, f64::INFINITY)
        .expect("unbounded input is valid")
}

impl LinearProblem {
    pub const REFERENCE: f64 = 1.0;
    pub const INPUT_WEIGHT: f64 = 1e-3;

    /// Equal bounds fix the input, e.g. `(1, 1)` for `u = 1`.
    pub fn with_input_bounds(a: f64, lower: f64, upper: f64) -> Result<Self> {
        let dims = Dimensions {
            states: 1,
            inputs: 1,
            params: 0,
            path: 0,
            boundary: 1,
        };
        let bounds = SimpleBounds {
            state: BoxBounds::unbounded(1),
            input: BoxBounds::new(vec![lower], vec![upper]),
            param: BoxBounds::unbounded(0),
        };
        let f = Linear {
            a,
            reference: Self::REFERENCE,
            weight: Self::INPUT_WEIGHT,
        };
        let ocp = OcpDefinition::new(
            "linear",
            dims,
            Arc::new(f),
            bounds,
            TimeMode::Fixed { t0: 0.0, tf: 1.0 },
        )?
        .with_names(&["x"], &["u"]);
        Ok(Self { a, ocp })
    }

    /// State at `t` under the constant input `u` from `x(0) = x0`.
    pub fn state_for_constant_input(&self, x0: f64, u: f64, t: f64) -> f64 {
        let e = (self.a * t).exp();
        if self.a == 0.0 {
            x0 + u * t
        } else {
            x0 * e + u * (e - 1.0) / self.a
        }
    }

    pub fn benchmark(&self, intervals: usize) -> Result<Benchmark> {
        let mesh = Mesh::uniform(intervals, Scheme::HermiteSimpson)?;
        let guess = default_guess(&self.ocp, &mesh);
        Ok(Benchmark {
            ocp: self.ocp.clone(),
            mesh,
            guess,
        })
    }
}
