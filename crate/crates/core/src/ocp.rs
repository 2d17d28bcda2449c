//! Continuous-time optimal control problems in Bolza form.
//!
//! A problem is a set of user functions (dynamics, running and terminal cost,
//! path constraints, boundary conditions) plus dimensions, simple bounds and
//! the time mode. Path constraints are feasible when every component is `<= 0`,
//! boundary conditions when every component is `== 0`.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};

/// The functions that make up a Bolza problem.
///
/// Implementations write into caller-provided buffers; every buffer has the
/// dimension declared by the owning [`OcpDefinition`].
pub trait OcpFunctions: Send + Sync {
    /// State derivative `f(x, u, t, p)`.
    fn dynamics(&self, x: &[f64], u: &[f64], t: f64, p: &[f64], dx: &mut [f64]);

    /// Running cost `L(x, u, t, p)`.
    fn lagrange_cost(&self, _x: &[f64], _u: &[f64], _t: f64, _p: &[f64]) -> f64 {
        0.0
    }

    /// Terminal cost `Phi(x0, t0, xf, tf, p)`.
    fn mayer_cost(&self, _x0: &[f64], _t0: f64, _xf: &[f64], _tf: f64, _p: &[f64]) -> f64 {
        0.0
    }

    /// Path constraint `c(x, u, t, p) <= 0`.
    fn path_constraint(&self, _x: &[f64], _u: &[f64], _t: f64, _p: &[f64], _out: &mut [f64]) {}

    /// Boundary condition `phi(x0, t0, xf, tf, p) = 0`.
    fn boundary(&self, _x0: &[f64], _t0: f64, _xf: &[f64], _tf: f64, _p: &[f64], _out: &mut [f64]) {
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    pub states: usize,
    pub inputs: usize,
    pub params: usize,
    pub path: usize,
    pub boundary: usize,
}

/// Componentwise box `lower <= v <= upper`; infinite entries mean unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn fixed(values: &[f64]) -> Self {
        Self {
            lower: values.to_vec(),
            upper: values.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Midpoint of each component, or the finite side, or zero when both are infinite.
    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| mid_or_zero(lo, hi))
            .collect()
    }

    fn validate(&self, what: &'static str, dim: usize) -> Result<()> {
        check_len(what, dim, self.lower.len())?;
        check_len(what, dim, self.upper.len())?;
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Parameters(format!(
                    "{what} bound {i}: lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn mid_or_zero(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo.max(0.0),
        (false, true) => hi.min(0.0),
        (false, false) => 0.0,
    }
}

/// Whether the horizon is fixed or the final time is a decision variable.
/// The initial time is always fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMode {
    Fixed {
        t0: f64,
        tf: f64,
    },
    FreeFinal {
        t0: f64,
        tf_lower: f64,
        tf_upper: f64,
    },
}

impl TimeMode {
    pub fn t0(&self) -> f64 {
        match *self {
            TimeMode::Fixed { t0, .. } | TimeMode::FreeFinal { t0, .. } => t0,
        }
    }

    pub fn is_free_final(&self) -> bool {
        matches!(self, TimeMode::FreeFinal { .. })
    }
}

/// Optional information used for default initial guesses and variable scaling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hints {
    /// Endpoint states the default guess interpolates between.
    pub initial_state: Option<Vec<f64>>,
    pub final_state: Option<Vec<f64>>,
    /// Typical magnitudes; the solver iterates on value / magnitude.
    pub state_scale: Option<Vec<f64>>,
    pub input_scale: Option<Vec<f64>>,
    pub param_scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleBounds {
    pub state: BoxBounds,
    pub input: BoxBounds,
    pub param: BoxBounds,
}

/// A continuous-time optimal control problem.
#[derive(Clone)]
pub struct OcpDefinition {
    pub name: String,
    pub dims: Dimensions,
    pub bounds: SimpleBounds,
    pub time: TimeMode,
    /// Names used for report and CSV headers; default to `x1.., u1.., p1..`.
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub hints: Hints,
    functions: Arc<dyn OcpFunctions>,
}

impl fmt::Debug for OcpDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpDefinition")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("bounds", &self.bounds)
            .field("time", &self.time)
            .finish_non_exhaustive()
    }
}

impl OcpDefinition {
    pub fn new(
        name: impl Into<String>,
        dims: Dimensions,
        functions: Arc<dyn OcpFunctions>,
        bounds: SimpleBounds,
        time: TimeMode,
    ) -> Result<Self> {
        bounds.state.validate("state", dims.states)?;
        bounds.input.validate("input", dims.inputs)?;
        bounds.param.validate("parameter", dims.params)?;
        match time {
            TimeMode::Fixed { t0, tf } if !(t0 < tf) => {
                return Err(Error::Parameters(format!("horizon [{t0}, {tf}] is empty")))
            }
            TimeMode::FreeFinal {
                t0,
                tf_lower,
                tf_upper,
            } if !(tf_lower <= tf_upper && t0 < tf_upper) => {
                return Err(Error::Parameters(format!(
                    "final time bounds [{tf_lower}, {tf_upper}] invalid for t0 = {t0}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            name: name.into(),
            state_names: (1..=dims.states).map(|i| format!("x{i}")).collect(),
            input_names: (1..=dims.inputs).map(|i| format!("u{i}")).collect(),
            dims,
            bounds,
            time,
            hints: Hints::default(),
            functions,
        })
    }

    pub fn with_hints(mut self, hints: Hints) -> Self {
        self.hints = hints;
        self
    }

    pub fn with_names(mut self, states: &[&str], inputs: &[&str]) -> Self {
        assert_eq!(states.len(), self.dims.states);
        assert_eq!(inputs.len(), self.dims.inputs);
        self.state_names = states.iter().map(|s| s.to_string()).collect();
        self.input_names = inputs.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn functions(&self) -> &dyn OcpFunctions {
        self.functions.as_ref()
    }

    fn check_point(&self, x: &[f64], u: &[f64], p: &[f64]) -> Result<()> {
        check_len("state", self.dims.states, x.len())?;
        check_len("input", self.dims.inputs, u.len())?;
        check_len("parameter", self.dims.params, p.len())
    }

    fn check_endpoints(&self, x0: &[f64], xf: &[f64], p: &[f64]) -> Result<()> {
        check_len("initial state", self.dims.states, x0.len())?;
        check_len("final state", self.dims.states, xf.len())?;
        check_len("parameter", self.dims.params, p.len())
    }

    pub fn dynamics_at(&self, x: &[f64], u: &[f64], t: f64, p: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, u, p)?;
        let mut dx = vec![0.0; self.dims.states];
        self.functions.dynamics(x, u, t, p, &mut dx);
        Ok(dx)
    }

    pub fn path_constraint_at(&self, x: &[f64], u: &[f64], t: f64, p: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, u, p)?;
        let mut c = vec![0.0; self.dims.path];
        self.functions.path_constraint(x, u, t, p, &mut c);
        Ok(c)
    }

    pub fn lagrange_at(&self, x: &[f64], u: &[f64], t: f64, p: &[f64]) -> Result<f64> {
        self.check_point(x, u, p)?;
        Ok(self.functions.lagrange_cost(x, u, t, p))
    }

    pub fn mayer_at(&self, x0: &[f64], t0: f64, xf: &[f64], tf: f64, p: &[f64]) -> Result<f64> {
        self.check_endpoints(x0, xf, p)?;
        Ok(self.functions.mayer_cost(x0, t0, xf, tf, p))
    }

    pub fn boundary_residual(
        &self,
        x0: &[f64],
        t0: f64,
        xf: &[f64],
        tf: f64,
        p: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_endpoints(x0, xf, p)?;
        let mut out = vec![0.0; self.dims.boundary];
        self.functions.boundary(x0, t0, xf, tf, p, &mut out);
        Ok(out)
    }
}
