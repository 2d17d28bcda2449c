//! Dense nonlinear programming.
//!
//! Problems have the form
//!
//! ```text
//! min f(v)  s.t.  c_E(v) = 0,  c_I(v) <= 0,  lower <= v <= upper
//! ```
//!
//! and are solved by SQP with an l1 merit line search and a dense dual
//! active-set QP subproblem. The Hessian is either a second-difference
//! Lagrangian Hessian made positive definite, with Gauss-Newton curvature for
//! least-squares objectives, or a damped BFGS approximation. All derivatives
//! are central finite differences.

mod fd;
mod qp;
mod sqp;

pub use fd::{fd_gradient, fd_jacobian, fd_step, CBRT_EPS};
pub use qp::{solve_qp, QpError, QpProblem, QpSolution};
pub use sqp::solve;

use serde::{Deserialize, Serialize};

pub type ObjectiveFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;
pub type ConstraintFn<'a> = Box<dyn Fn(&[f64], &mut [f64]) + 'a>;

/// A finite-dimensional nonlinear program.
pub struct NlpProblem<'a> {
    dim: usize,
    objective: ObjectiveFn<'a>,
    residuals: Option<(usize, ConstraintFn<'a>)>,
    equalities: Option<(usize, ConstraintFn<'a>)>,
    inequalities: Option<(usize, ConstraintFn<'a>)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    initial: Vec<f64>,
    variable_scales: Vec<f64>,
}

impl<'a> NlpProblem<'a> {
    pub fn new(initial: Vec<f64>, objective: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        let dim = initial.len();
        Self {
            dim,
            objective: Box::new(objective),
            residuals: None,
            equalities: None,
            inequalities: None,
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            initial,
            variable_scales: vec![1.0; dim],
        }
    }

    /// Least-squares objective `f(v) = sum r_i(v)^2`; the solver uses the
    /// Gauss-Newton curvature `2 J_r' J_r` for it.
    pub fn least_squares(
        initial: Vec<f64>,
        count: usize,
        r: impl Fn(&[f64], &mut [f64]) + 'a,
    ) -> Self {
        let mut p = Self::new(initial, |_| 0.0);
        p.residuals = Some((count, Box::new(r)));
        p
    }

    pub fn with_equalities(mut self, count: usize, f: impl Fn(&[f64], &mut [f64]) + 'a) -> Self {
        self.equalities = Some((count, Box::new(f)));
        self
    }

    /// Inequalities `g(v) <= 0`.
    pub fn with_inequalities(mut self, count: usize, f: impl Fn(&[f64], &mut [f64]) + 'a) -> Self {
        self.inequalities = Some((count, Box::new(f)));
        self
    }

    /// Simple bounds; the initial point is clipped into them.
    ///
    /// Panics when the lengths differ from the problem dimension or a lower
    /// bound exceeds its upper bound.
    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), self.dim, "lower bound length");
        assert_eq!(upper.len(), self.dim, "upper bound length");
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            assert!(l <= u, "bound {i}: {l} > {u}");
        }
        self.lower = lower;
        self.upper = upper;
        clip(&mut self.initial, &self.lower, &self.upper);
        self
    }

    /// Typical magnitude of each variable; the solver iterates on `v / scale`.
    pub fn with_variable_scales(mut self, scales: Vec<f64>) -> Self {
        assert_eq!(scales.len(), self.dim, "scale length");
        assert!(scales.iter().all(|s| *s > 0.0 && s.is_finite()));
        self.variable_scales = scales;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn equality_count(&self) -> usize {
        self.equalities.as_ref().map_or(0, |e| e.0)
    }

    pub fn inequality_count(&self) -> usize {
        self.inequalities.as_ref().map_or(0, |e| e.0)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        match &self.residuals {
            Some(_) => self.residuals(v).iter().map(|r| r * r).sum(),
            None => (self.objective)(v),
        }
    }

    pub fn residual_count(&self) -> usize {
        self.residuals.as_ref().map_or(0, |r| r.0)
    }

    /// Residuals of a least-squares objective; empty otherwise.
    pub fn residuals(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.residual_count()];
        if let Some((_, f)) = &self.residuals {
            f(v, &mut out);
        }
        out
    }

    pub fn equalities(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.equality_count()];
        if let Some((_, f)) = &self.equalities {
            f(v, &mut out);
        }
        out
    }

    pub fn inequalities(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inequality_count()];
        if let Some((_, f)) = &self.inequalities {
            f(v, &mut out);
        }
        out
    }

    pub(crate) fn variable_scales(&self) -> &[f64] {
        &self.variable_scales
    }

    /// Largest violation of equalities and inequalities at `v`.
    pub fn violations(&self, v: &[f64]) -> (f64, f64) {
        let eq = self
            .equalities(v)
            .iter()
            .fold(0.0_f64, |a, c| a.max(c.abs()));
        let ineq = self.inequalities(v).iter().fold(0.0_f64, |a, c| a.max(*c));
        let bound = v
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0_f64, |a, (x, (l, u))| a.max(l - x).max(x - u));
        (eq, ineq.max(bound).max(0.0))
    }
}

pub(crate) fn clip(v: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((x, l), u) in v.iter_mut().zip(lower).zip(upper) {
        *x = x.clamp(*l, *u);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpOptions {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Relative finite-difference step; the step for `v_i` is `fd_relative_step * (1 + |v_i|)`.
    pub fd_relative_step: f64,
    /// Sufficient-decrease constant of the Armijo test on the l1 merit.
    pub armijo: f64,
    /// Smallest step length tried before the line search gives up.
    pub min_step: f64,
    pub hessian: HessianApproximation,
    /// Accuracy order of the difference formulas for gradients and Jacobians.
    pub difference_order: DifferenceOrder,
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceOrder {
    /// Two-point central differences with step `fd_relative_step * (1 + |v|)`.
    Second,
    /// Four-point central differences with step `eps^(1/5) * (1 + |v|)`.
    Fourth,
}

/// How the SQP subproblem's Lagrangian Hessian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianApproximation {
    /// Damped BFGS updates.
    Bfgs,
    /// Second differences of the Lagrangian, with negative curvature
    /// reflected to make it positive definite.
    FiniteDifference,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-9,
            max_iterations: 500,
            fd_relative_step: CBRT_EPS,
            armijo: 1e-4,
            min_step: 1e-12,
            hessian: HessianApproximation::FiniteDifference,
            difference_order: DifferenceOrder::Fourth,
            verbose: false,
        }
    }
}

impl NlpOptions {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.kkt_tolerance > 0.0) {
            return Err(crate::Error::Options(
                "kkt_tolerance must be positive".into(),
            ));
        }
        if !(self.fd_relative_step > 0.0) {
            return Err(crate::Error::Options(
                "finite-difference step must be positive".into(),
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(crate::Error::Options(
                "armijo constant must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

/// Primal point and optional multipliers from an earlier solve.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub point: Vec<f64>,
    pub equality_multipliers: Option<Vec<f64>>,
    pub inequality_multipliers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlpResult {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub max_equality_violation: f64,
    pub max_inequality_violation: f64,
    /// Infinity norm of the scaled Lagrangian gradient at the returned point.
    pub stationarity: f64,
    pub status: NlpStatus,
    pub iterations: usize,
    pub equality_multipliers: Vec<f64>,
    pub inequality_multipliers: Vec<f64>,
    /// `(before, after)` l1 merit values of every accepted step, same penalty.
    pub merit_history: Vec<(f64, f64)>,
    pub message: String,
}

impl NlpResult {
    pub fn converged(&self) -> bool {
        self.status == NlpStatus::Converged
    }

    pub fn max_violation(&self) -> f64 {
        self.max_equality_violation
            .max(self.max_inequality_violation)
    }
}
