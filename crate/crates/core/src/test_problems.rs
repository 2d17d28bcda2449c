//! Small scalar problems shared by unit tests.

use std::sync::Arc;

use crate::ocp::{BoxBounds, Dimensions, OcpDefinition, OcpFunctions, SimpleBounds, TimeMode};

pub(crate) struct Scalar {
    pub f: fn(f64, f64, f64) -> f64,
    pub l: fn(f64, f64) -> f64,
    pub mayer_tf: f64,
    pub x0: Option<f64>,
}

impl OcpFunctions for Scalar {
    fn dynamics(&self, x: &[f64], u: &[f64], t: f64, _p: &[f64], dx: &mut [f64]) {
        dx[0] = (self.f)(x[0], u[0], t);
    }

    fn lagrange_cost(&self, x: &[f64], u: &[f64], _t: f64, _p: &[f64]) -> f64 {
        (self.l)(x[0], u[0])
    }

    fn mayer_cost(&self, _x0: &[f64], _t0: f64, _xf: &[f64], tf: f64, _p: &[f64]) -> f64 {
        self.mayer_tf * tf
    }

    fn boundary(&self, x0: &[f64], _t0: f64, _xf: &[f64], _tf: f64, _p: &[f64], out: &mut [f64]) {
        if let Some(v) = self.x0 {
            out[0] = x0[0] - v;
        }
    }
}

pub(crate) fn scalar(s: Scalar, tf: f64) -> OcpDefinition {
    let dims = Dimensions {
        states: 1,
        inputs: 1,
        params: 0,
        path: 0,
        boundary: usize::from(s.x0.is_some()),
    };
    let bounds = SimpleBounds {
        state: BoxBounds::unbounded(1),
        input: BoxBounds::unbounded(1),
        param: BoxBounds::unbounded(0),
    };
    OcpDefinition::new(
        "scalar",
        dims,
        Arc::new(s),
        bounds,
        TimeMode::Fixed { t0: 0.0, tf },
    )
    .unwrap()
}

fn zero(_: f64, _: f64) -> f64 {
    0.0
}

pub(crate) fn constant_rate() -> OcpDefinition {
    scalar(
        Scalar {
            f: |_, _, _| 1.0,
            l: zero,
            mayer_tf: 0.0,
            x0: None,
        },
        1.0,
    )
}

pub(crate) fn exponential() -> OcpDefinition {
    scalar(
        Scalar {
            f: |x, _, _| x,
            l: zero,
            mayer_tf: 0.0,
            x0: None,
        },
        1.0,
    )
}

/// `x' = u` with `x(0) = 0`.
pub(crate) fn integrator() -> OcpDefinition {
    scalar(
        Scalar {
            f: |_, u, _| u,
            l: zero,
            mayer_tf: 0.0,
            x0: Some(0.0),
        },
        1.0,
    )
}

pub(crate) fn quiet(running: f64, mayer_tf: f64) -> OcpDefinition {
    let l: fn(f64, f64) -> f64 = if running == 0.0 { zero } else { |_, _| 1.0 };
    scalar(
        Scalar {
            f: |_, _, _| 0.0,
            l,
            mayer_tf,
            x0: None,
        },
        1.0,
    )
}

pub(crate) fn input_energy() -> OcpDefinition {
    scalar(
        Scalar {
            f: |_, _, _| 0.0,
            l: |_, u| u * u,
            mayer_tf: 0.0,
            x0: None,
        },
        1.0,
    )
}

/// `x' = 0`, running cost `x^2`; optimum `x = 0`.
pub(crate) fn still() -> OcpDefinition {
    scalar(
        Scalar {
            f: |_, _, _| 0.0,
            l: |x, _| x * x,
            mayer_tf: 0.0,
            x0: None,
        },
        1.0,
    )
}
