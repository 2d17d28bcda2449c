//! Local error metrics of represented trajectories and h-refinement.
//!
//! The ODE residual `e(t) = x~'(t) - f(x~(t), u~(t), t, p)` is integrated over
//! every sub-interval between consecutive nodes: `eta = int |e|_2` and
//! `sigma_q = int |e_q|`. Path constraint violation `max(0, c)` is sampled on
//! a uniform grid. Refinement bisects every mesh interval whose largest
//! sub-interval `eta` exceeds the tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DecisionData, Mesh};
use crate::nlp::{NlpOptions, NlpStatus};
use crate::ocp::OcpDefinition;
use crate::quadrature::{gauss_legendre, QuadratureRule};
use crate::trajectory::{ClosureMode, RepresentedTrajectory};
use crate::transcription::solve_collocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorOptions {
    /// Gauss points per sub-interval for `eta` and `sigma`.
    pub quadrature_points: usize,
    /// Uniform subdivisions per mesh interval for constraint sampling.
    pub samples_per_interval: usize,
}

impl Default for ErrorOptions {
    fn default() -> Self {
        Self {
            quadrature_points: 7,
            samples_per_interval: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalError {
    /// Sub-interval boundary times.
    pub times: Vec<f64>,
    /// Mesh interval owning each sub-interval.
    pub interval: Vec<usize>,
    pub eta: Vec<f64>,
    /// `sigma[j][q]` for sub-interval `j` and state `q`.
    pub sigma: Vec<Vec<f64>>,
}

impl LocalError {
    /// Largest sub-interval `eta` of every mesh interval.
    pub fn interval_eta(&self, intervals: usize) -> Vec<f64> {
        let mut out = vec![0.0_f64; intervals];
        for (&k, &e) in self.interval.iter().zip(&self.eta) {
            out[k] = out[k].max(e);
        }
        out
    }

    pub fn max_eta(&self) -> f64 {
        self.eta.iter().fold(0.0, |a, &e| a.max(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub local: LocalError,
    /// Largest sampled violation of each path constraint.
    pub max_constraint_violation: Vec<f64>,
}

/// `x~'(t) - f(x~(t), u~(t), t, p)`.
pub fn ode_residual(
    traj: &RepresentedTrajectory,
    ocp: &OcpDefinition,
    t: f64,
) -> Result<Vec<f64>> {
    let (k, s) = traj.locate(t)?;
    let mut buf = Buffers::new(traj);
    buf.residual(traj, ocp, k, s);
    Ok(buf.e)
}

struct Buffers {
    x: Vec<f64>,
    u: Vec<f64>,
    f: Vec<f64>,
    e: Vec<f64>,
}

impl Buffers {
    fn new(traj: &RepresentedTrajectory) -> Self {
        let (n, m) = (traj.states(), traj.inputs());
        Self {
            x: vec![0.0; n],
            u: vec![0.0; m],
            f: vec![0.0; n],
            e: vec![0.0; n],
        }
    }

    fn residual(&mut self, traj: &RepresentedTrajectory, ocp: &OcpDefinition, k: usize, s: f64) {
        traj.state_in(k, s, &mut self.x);
        traj.state_derivative_in(k, s, &mut self.e);
        traj.input_in(k, s, &mut self.u);
        let t = traj.time_in(k, s);
        ocp.functions()
            .dynamics(&self.x, &self.u, t, traj.params(), &mut self.f);
        for (e, f) in self.e.iter_mut().zip(&self.f) {
            *e -= f;
        }
    }
}

/// `eta` and `sigma` over the sub-intervals between consecutive nodes,
/// each integrated with `rule` mapped to the sub-interval.
pub fn absolute_local_error(
    traj: &RepresentedTrajectory,
    ocp: &OcpDefinition,
    rule: &QuadratureRule,
) -> LocalError {
    let mesh = traj.mesh();
    let local = mesh.scheme().local_nodes();
    let times = traj.interval_times();
    let n = traj.states();
    let mut buf = Buffers::new(traj);
    let mut out = LocalError {
        times: vec![times[0]],
        interval: Vec::new(),
        eta: Vec::new(),
        sigma: Vec::new(),
    };
    for k in 0..mesh.intervals() {
        let h = times[k + 1] - times[k];
        for pair in local.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mut eta = 0.0;
            let mut sigma = vec![0.0; n];
            for (node, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = a + half * (node + 1.0);
                buf.residual(traj, ocp, k, s);
                let wt = w * half * h;
                eta += wt * buf.e.iter().map(|e| e * e).sum::<f64>().sqrt();
                for (sq, e) in sigma.iter_mut().zip(&buf.e) {
                    *sq += wt * e.abs();
                }
            }
            out.times.push(if b == 1.0 { times[k + 1] } else { times[k] + b * h });
            out.interval.push(k);
            out.eta.push(eta);
            out.sigma.push(sigma);
        }
    }
    out
}

/// Largest `max(0, c)` of every path constraint over a uniform grid with
/// `samples_per_interval` subdivisions of each mesh interval.
pub fn constraint_violation(
    traj: &RepresentedTrajectory,
    ocp: &OcpDefinition,
    samples_per_interval: usize,
) -> Vec<f64> {
    let ng = ocp.dims.path;
    let mut worst = vec![0.0_f64; ng];
    if ng == 0 {
        return worst;
    }
    let samples = samples_per_interval.max(1);
    let mut x = vec![0.0; traj.states()];
    let mut u = vec![0.0; traj.inputs()];
    let mut c = vec![0.0; ng];
    for k in 0..traj.mesh().intervals() {
        for j in 0..=samples {
            let s = j as f64 / samples as f64;
            traj.state_in(k, s, &mut x);
            traj.input_in(k, s, &mut u);
            let t = traj.time_in(k, s);
            ocp.functions()
                .path_constraint(&x, &u, t, traj.params(), &mut c);
            for (w, v) in worst.iter_mut().zip(&c) {
                *w = w.max(*v);
            }
        }
    }
    worst
}

pub fn error_report(
    traj: &RepresentedTrajectory,
    ocp: &OcpDefinition,
    options: &ErrorOptions,
) -> Result<ErrorReport> {
    let rule = gauss_legendre(options.quadrature_points)?;
    Ok(ErrorReport {
        local: absolute_local_error(traj, ocp, &rule),
        max_constraint_violation: constraint_violation(traj, ocp, options.samples_per_interval),
    })
}

/// Bisect every interval whose `eta` exceeds `eta_tol`.
pub fn refine_mesh(mesh: &Mesh, interval_eta: &[f64], eta_tol: f64) -> Result<Mesh> {
    let split: Vec<bool> = interval_eta.iter().map(|&e| e > eta_tol).collect();
    if split.iter().any(|&s| s) {
        mesh.bisect(&split)
    } else {
        crate::error::check_len("interval errors", mesh.intervals(), split.len())?;
        Ok(mesh.clone())
    }
}

/// Sample a represented trajectory at the nodes of `mesh`.
pub fn resample(traj: &RepresentedTrajectory, mesh: &Mesh) -> Result<DecisionData> {
    let (t0, tf) = (traj.t0(), traj.tf());
    let mut states = Vec::with_capacity(mesh.node_count() * traj.states());
    let mut inputs = Vec::with_capacity(mesh.node_count() * traj.inputs());
    for tau in mesh.node_taus() {
        let t = (t0 + tau * (tf - t0)).min(tf);
        states.extend(traj.eval_state(t)?);
        inputs.extend(traj.eval_input(t)?);
    }
    Ok(DecisionData {
        n: traj.states(),
        m: traj.inputs(),
        states,
        inputs,
        params: traj.params().to_vec(),
        t0,
        tf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRound {
    pub intervals: usize,
    pub fractions: Vec<f64>,
    pub cost: f64,
    pub max_eta: f64,
    pub status: NlpStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStatus {
    Converged,
    RoundsExhausted,
    SolverFailed,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    /// Mesh of the last solve.
    pub mesh: Mesh,
    pub decision: DecisionData,
    pub cost: f64,
    pub history: Vec<RefineRound>,
    pub status: RefineStatus,
}

/// Alternate collocation solves, error estimation on the direct
/// interpolation and bisection until every `eta <= eta_tol` or `max_rounds`
/// solves have run. Each round is warm started from the previous
/// continuity-closed representation sampled at the new nodes.
pub fn refine_loop(
    ocp: &OcpDefinition,
    mesh0: &Mesh,
    guess: &DecisionData,
    eta_tol: f64,
    max_rounds: usize,
    nlp: &NlpOptions,
    errors: &ErrorOptions,
) -> Result<RefineOutcome> {
    if max_rounds == 0 {
        return Err(Error::Options("max_rounds must be at least 1".into()));
    }
    if !(eta_tol > 0.0) {
        return Err(Error::Options("eta tolerance must be positive".into()));
    }
    let rule = gauss_legendre(errors.quadrature_points)?;
    let mut mesh = mesh0.clone();
    let mut start = guess.clone();
    let mut history = Vec::new();
    loop {
        let sol = solve_collocation(ocp, &mesh, &start, nlp)?;
        let direct = RepresentedTrajectory::reconstruct(&sol.decision, &mesh, ocp, ClosureMode::Direct)?;
        let local = absolute_local_error(&direct, ocp, &rule);
        history.push(RefineRound {
            intervals: mesh.intervals(),
            fractions: mesh.fractions().to_vec(),
            cost: sol.cost,
            max_eta: local.max_eta(),
            status: sol.result.status,
            iterations: sol.result.iterations,
        });
        let done = |status| RefineOutcome {
            mesh: mesh.clone(),
            decision: sol.decision.clone(),
            cost: sol.cost,
            history: history.clone(),
            status,
        };
        if !sol.result.converged() {
            return Ok(done(RefineStatus::SolverFailed));
        }
        if local.max_eta() <= eta_tol {
            return Ok(done(RefineStatus::Converged));
        }
        if history.len() == max_rounds {
            return Ok(done(RefineStatus::RoundsExhausted));
        }
        let closed =
            RepresentedTrajectory::reconstruct(&sol.decision, &mesh, ocp, ClosureMode::ContinuityClosed)?;
        mesh = refine_mesh(&mesh, &local.interval_eta(mesh.intervals()), eta_tol)?;
        start = resample(&closed, &mesh)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Scheme;
    use crate::ocp::{BoxBounds, Dimensions, OcpFunctions, SimpleBounds, TimeMode};
    use crate::residual::residual_at;
    use crate::test_problems::{constant_rate, exponential};
    use std::sync::Arc;

    fn data(states: Vec<f64>, inputs: Vec<f64>, tf: f64) -> DecisionData {
        DecisionData {
            n: 1,
            m: 1,
            states,
            inputs,
            params: vec![],
            t0: 0.0,
            tf,
        }
    }

    /// `x' = u` with path constraint `x - 1 <= 0`.
    struct Capped;

    impl OcpFunctions for Capped {
        fn dynamics(&self, _x: &[f64], u: &[f64], _t: f64, _p: &[f64], dx: &mut [f64]) {
            dx[0] = u[0];
        }

        fn path_constraint(&self, x: &[f64], _u: &[f64], _t: f64, _p: &[f64], out: &mut [f64]) {
            out[0] = x[0] - 1.0;
        }
    }

    fn capped() -> OcpDefinition {
        let dims = Dimensions {
            states: 1,
            inputs: 1,
            params: 0,
            path: 1,
            boundary: 0,
        };
        let bounds = SimpleBounds {
            state: BoxBounds::unbounded(1),
            input: BoxBounds::unbounded(1),
            param: BoxBounds::unbounded(0),
        };
        OcpDefinition::new("capped", dims, Arc::new(Capped), bounds, TimeMode::Fixed { t0: 0.0, tf: 1.0 })
            .unwrap()
    }

    #[test]
    fn residual_vanishes_for_representable_dynamics() {
        let ocp = constant_rate();
        let mesh = Mesh::uniform(2, Scheme::HermiteSimpson).unwrap();
        let z = data(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.0; 5], 1.0);
        let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed).unwrap();
        for j in 0..=10 {
            assert!(ode_residual(&traj, &ocp, j as f64 / 10.0).unwrap()[0].abs() < 1e-14);
        }
        let rep = error_report(&traj, &ocp, &ErrorOptions::default()).unwrap();
        assert_eq!(rep.local.eta.len(), 4);
        assert!(rep.local.eta.iter().all(|&e| e < 1e-14));
        assert!(rep.max_constraint_violation.is_empty());
    }

    #[test]
    fn residual_out_of_range() {
        let ocp = constant_rate();
        let mesh = Mesh::uniform(1, Scheme::Trapezoidal).unwrap();
        let traj = RepresentedTrajectory::reconstruct(&data(vec![0.0, 1.0], vec![0.0; 2], 1.0), &mesh, &ocp, ClosureMode::Direct).unwrap();
        assert!(ode_residual(&traj, &ocp, 1.5).is_err());
    }

    #[test]
    fn squared_residual_matches_norm() {
        let ocp = exponential();
        let mesh = Mesh::uniform(2, Scheme::HermiteSimpson).unwrap();
        let z = data(vec![1.0, 1.3, 1.6, 2.1, 2.7], vec![0.0; 5], 1.0);
        let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed).unwrap();
        for t in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let e = ode_residual(&traj, &ocp, t).unwrap();
            let r = residual_at(&traj, &ocp, t).unwrap();
            assert!((e[0] * e[0] - r).abs() <= 1e-14 * r.max(1.0));
        }
    }

    #[test]
    fn scalar_eta_equals_sigma() {
        let ocp = exponential();
        let mesh = Mesh::uniform(3, Scheme::HermiteSimpson).unwrap();
        let z = data(vec![1.0, 1.1, 1.4, 1.3, 1.9, 2.0, 2.2], vec![0.0; 7], 1.0);
        let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed).unwrap();
        let local = absolute_local_error(&traj, &ocp, &gauss_legendre(7).unwrap());
        assert_eq!(local.times.len(), 7);
        for (e, s) in local.eta.iter().zip(&local.sigma) {
            assert!(*e > 0.0);
            assert_eq!(*e, s[0]);
        }
        assert_eq!(local.interval, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(local.interval_eta(3)[1], local.eta[2].max(local.eta[3]));
    }

    #[test]
    fn interior_overshoot_is_detected() {
        // nodes stay at 1 while the cubic bump peaks 0.3 higher on the first half
        let ocp = capped();
        let mesh = Mesh::uniform(1, Scheme::HermiteSimpson).unwrap();
        let peak = (3.0 - 3f64.sqrt()) / 6.0;
        let c = 0.3 / (peak * (peak - 0.5) * (peak - 1.0));
        let z = data(vec![1.0; 3], vec![0.5 * c, 0.0, 0.0], 1.0);
        let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed).unwrap();
        let top = traj.eval_state(peak).unwrap()[0];
        assert!((top - 1.3).abs() < 1e-12);
        let v = constraint_violation(&traj, &ocp, 20);
        assert!((v[0] - 0.3).abs() < 1e-3, "{v:?}");
        let fine = constraint_violation(&traj, &ocp, 2000);
        assert!((fine[0] - 0.3).abs() < 1e-6);
        let nodes_only = constraint_violation(&traj, &ocp, 2);
        assert_eq!(nodes_only[0], 0.0);
    }

    #[test]
    fn refinement_rule() {
        let mesh = Mesh::uniform(10, Scheme::HermiteSimpson).unwrap();
        let quiet = vec![1e-9; 10];
        assert_eq!(refine_mesh(&mesh, &quiet, 1e-6).unwrap(), mesh);
        let mut one = quiet.clone();
        one[3] = 1.0;
        let r = refine_mesh(&mesh, &one, 1e-6).unwrap();
        assert_eq!(r.intervals(), 11);
        assert_eq!(r.fractions()[3], 0.05);
        assert_eq!(r.fractions()[4], 0.05);
        assert_eq!(r.scheme(), mesh.scheme());
        let all = refine_mesh(&mesh, &[1.0; 10], 1e-6).unwrap();
        assert_eq!(all.intervals(), 20);
        assert!(refine_mesh(&mesh, &[1.0; 3], 1e-6).is_err());
    }

    #[test]
    fn resampling_reproduces_nodes_on_the_same_mesh() {
        let ocp = exponential();
        let mesh = Mesh::uniform(2, Scheme::HermiteSimpson).unwrap();
        let z = data(vec![1.0, 1.3, 1.6, 2.1, 2.7], vec![0.1, 0.2, 0.3, 0.4, 0.5], 1.0);
        let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed).unwrap();
        let back = resample(&traj, &mesh).unwrap();
        for (a, b) in back.states.iter().zip(&z.states) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in back.inputs.iter().zip(&z.inputs) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
