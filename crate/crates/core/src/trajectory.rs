//! Continuous-time trajectories reconstructed from collocation decision data.
//!
//! Within interval `k`, with `s = (t - t_k) / h_k` in `[0, 1]`, the state is
//! a polynomial in `s` of degree 1 (Euler), 2 (Trapezoidal) or 3
//! (Hermite-Simpson) and the input is of degree 0, 1 or 2. In
//! [`ClosureMode::Direct`] the node derivatives are `F_i = f(X_i, U_i, t_i, p)`;
//! in [`ClosureMode::ContinuityClosed`] all derivatives after the first are
//! replaced by the values that make the polynomial pass through the interval's
//! remaining state nodes, so the state is continuous for any decision data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DecisionData, Mesh, Scheme};
use crate::ocp::OcpDefinition;
use crate::transcription::node_dynamics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureMode {
    Direct,
    ContinuityClosed,
}

impl fmt::Display for ClosureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClosureMode::Direct => "direct",
            ClosureMode::ContinuityClosed => "continuity_closed",
        })
    }
}

impl FromStr for ClosureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "direct" => Ok(ClosureMode::Direct),
            "continuity_closed" | "closed" => Ok(ClosureMode::ContinuityClosed),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

/// Node derivatives at the midpoint and end of a Hermite-Simpson interval that
/// make the cubic through `x1` with slope `f1` pass through `x2` and `x3`.
pub fn closure_f2_f3(x1: f64, x2: f64, x3: f64, f1: f64, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveWidth(h));
    }
    let f2 = -(5.0 * x1 - 4.0 * x2 - x3 + f1 * h) / (2.0 * h);
    let f3 = (4.0 * x1 - 8.0 * x2 + 4.0 * x3 + f1 * h) / h;
    Ok((f2, f3))
}

/// End-node derivative that makes the trapezoidal quadratic reach `x2`.
pub fn closure_trapezoidal(x1: f64, x2: f64, f1: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveWidth(h));
    }
    Ok(2.0 * (x2 - x1) / h - f1)
}

const STATE_COEFS: usize = 4;
const INPUT_COEFS: usize = 3;

/// Piecewise polynomial state, state derivative and input on `[t0, tf]`.
#[derive(Debug, Clone)]
pub struct RepresentedTrajectory {
    mesh: Mesh,
    mode: ClosureMode,
    n: usize,
    m: usize,
    params: Vec<f64>,
    /// Interval boundary times, `K + 1` entries.
    times: Vec<f64>,
    /// Coefficients in `s`, interval-major then component-major, ascending powers.
    state: Vec<f64>,
    input: Vec<f64>,
}

impl RepresentedTrajectory {
    pub fn reconstruct(
        z: &DecisionData,
        mesh: &Mesh,
        ocp: &OcpDefinition,
        mode: ClosureMode,
    ) -> Result<Self> {
        z.validate(mesh, ocp)?;
        let (n, m) = (z.n, z.m);
        let horizon = z.horizon();
        if !(horizon > 0.0) {
            return Err(Error::NonPositiveWidth(horizon));
        }
        let mut times: Vec<f64> = mesh
            .boundaries()
            .iter()
            .map(|b| z.t0 + horizon * b)
            .collect();
        *times.last_mut().expect("non-empty mesh") = z.tf;

        let node_times = z.node_times(mesh);
        let f = node_dynamics(z, &node_times, ocp);
        let fq = |j: usize, q: usize| f[j * n + q];

        let k_count = mesh.intervals();
        let mut state = vec![0.0; k_count * n * STATE_COEFS];
        let mut input = vec![0.0; k_count * m * INPUT_COEFS];
        for k in 0..k_count {
            let h = times[k + 1] - times[k];
            if !(h > 0.0) {
                return Err(Error::NonPositiveWidth(h));
            }
            let idx = |i: usize| mesh.node_index(k, i);
            for q in 0..n {
                let c = &mut state[(k * n + q) * STATE_COEFS..(k * n + q + 1) * STATE_COEFS];
                let x = |i: usize| z.state(idx(i))[q];
                let f1 = fq(idx(0), q);
                match mesh.scheme() {
                    Scheme::Euler => {
                        c[0] = x(0);
                        c[1] = match mode {
                            ClosureMode::Direct => f1 * h,
                            ClosureMode::ContinuityClosed => x(1) - x(0),
                        };
                    }
                    Scheme::Trapezoidal => {
                        let f2 = match mode {
                            ClosureMode::Direct => fq(idx(1), q),
                            ClosureMode::ContinuityClosed => {
                                closure_trapezoidal(x(0), x(1), f1, h)?
                            }
                        };
                        c[0] = x(0);
                        c[1] = f1 * h;
                        c[2] = 0.5 * (f2 - f1) * h;
                    }
                    Scheme::HermiteSimpson => {
                        let (f2, f3) = match mode {
                            ClosureMode::Direct => (fq(idx(1), q), fq(idx(2), q)),
                            ClosureMode::ContinuityClosed => {
                                closure_f2_f3(x(0), x(1), x(2), f1, h)?
                            }
                        };
                        c[0] = x(0);
                        c[1] = f1 * h;
                        c[2] = 0.5 * (-3.0 * f1 + 4.0 * f2 - f3) * h;
                        c[3] = 2.0 / 3.0 * (f1 - 2.0 * f2 + f3) * h;
                    }
                }
            }
            for r in 0..m {
                let c = &mut input[(k * m + r) * INPUT_COEFS..(k * m + r + 1) * INPUT_COEFS];
                let u = |i: usize| z.input(idx(i))[r];
                match mesh.scheme() {
                    Scheme::Euler => c[0] = u(0),
                    Scheme::Trapezoidal => {
                        c[0] = u(0);
                        c[1] = u(1) - u(0);
                    }
                    Scheme::HermiteSimpson => {
                        c[0] = u(0);
                        c[1] = -3.0 * u(0) + 4.0 * u(1) - u(2);
                        c[2] = 2.0 * u(0) - 4.0 * u(1) + 2.0 * u(2);
                    }
                }
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            mode,
            n,
            m,
            params: z.params.clone(),
            times,
            state,
            input,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mode(&self) -> ClosureMode {
        self.mode
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn tf(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Interval boundary times `t_0 < t_1 < ... < t_K`.
    pub fn interval_times(&self) -> &[f64] {
        &self.times
    }

    /// Owning interval and local coordinate of `t`; interior boundaries
    /// belong to the interval on their left.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, tf) = (self.t0(), self.tf());
        if !(t >= t0 && t <= tf) {
            return Err(Error::OutOfRange { t, t0, tf });
        }
        let interior = &self.times[1..self.times.len() - 1];
        let k = interior.partition_point(|&b| b < t);
        let h = self.times[k + 1] - self.times[k];
        Ok((k, ((t - self.times[k]) / h).clamp(0.0, 1.0)))
    }

    fn width(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// State in interval `k` at local coordinate `s`, written to `out`.
    pub fn state_in(&self, k: usize, s: f64, out: &mut [f64]) {
        for (q, o) in out.iter_mut().enumerate().take(self.n) {
            let c = &self.state[(k * self.n + q) * STATE_COEFS..];
            *o = c[0] + s * (c[1] + s * (c[2] + s * c[3]));
        }
    }

    pub fn state_derivative_in(&self, k: usize, s: f64, out: &mut [f64]) {
        let h = self.width(k);
        for (q, o) in out.iter_mut().enumerate().take(self.n) {
            let c = &self.state[(k * self.n + q) * STATE_COEFS..];
            *o = (c[1] + s * (2.0 * c[2] + s * 3.0 * c[3])) / h;
        }
    }

    pub fn input_in(&self, k: usize, s: f64, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.m) {
            let c = &self.input[(k * self.m + r) * INPUT_COEFS..];
            *o = c[0] + s * (c[1] + s * c[2]);
        }
    }

    /// Time of local coordinate `s` in interval `k`.
    pub fn time_in(&self, k: usize, s: f64) -> f64 {
        self.times[k] + s * self.width(k)
    }

    pub fn eval_state(&self, t: f64) -> Result<Vec<f64>> {
        let (k, s) = self.locate(t)?;
        let mut out = vec![0.0; self.n];
        self.state_in(k, s, &mut out);
        Ok(out)
    }

    pub fn eval_state_derivative(&self, t: f64) -> Result<Vec<f64>> {
        let (k, s) = self.locate(t)?;
        let mut out = vec![0.0; self.n];
        self.state_derivative_in(k, s, &mut out);
        Ok(out)
    }

    pub fn eval_input(&self, t: f64) -> Result<Vec<f64>> {
        let (k, s) = self.locate(t)?;
        let mut out = vec![0.0; self.m];
        self.input_in(k, s, &mut out);
        Ok(out)
    }
}
