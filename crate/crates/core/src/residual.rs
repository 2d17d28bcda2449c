//! Integrated squared dynamics residual and the representation NLP.
//!
//! For a reconstructed trajectory the residual is
//! `r(t) = |x~'(t) - f(x~(t), u~(t), t, p)|^2`, and its integral over each
//! interval is evaluated by Gauss-Legendre quadrature of the mesh's order.
//! The representation problem minimizes that integral over the collocation
//! variables, keeping the path constraints and boundary conditions and
//! bounding the discrete cost by the collocation optimum.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::{pack, unpack, DecisionData, Mesh};
use crate::nlp::{self, NlpOptions, NlpProblem, NlpResult};
use crate::ocp::OcpDefinition;
use crate::quadrature::{gauss_legendre, QuadratureRule};
use crate::trajectory::{ClosureMode, RepresentedTrajectory};
use crate::transcription::{
    boundary_into, decision_bounds, decision_scales, discrete_cost_unchecked,
    node_path_constraints_into,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub per_interval: Vec<f64>,
    pub total: f64,
    /// Integral of each state component's squared residual.
    pub per_state: Vec<f64>,
}

/// Squared residual at time `t`.
pub fn residual_at(traj: &RepresentedTrajectory, ocp: &OcpDefinition, t: f64) -> Result<f64> {
    let (k, s) = traj.locate(t)?;
    let mut scratch = Scratch::new(traj);
    Ok(scratch.components(traj, ocp, k, s).iter().sum())
}

struct Scratch {
    x: Vec<f64>,
    dx: Vec<f64>,
    u: Vec<f64>,
    f: Vec<f64>,
    r: Vec<f64>,
}

impl Scratch {
    fn new(traj: &RepresentedTrajectory) -> Self {
        let (n, m) = (traj.states(), traj.inputs());
        Self {
            x: vec![0.0; n],
            dx: vec![0.0; n],
            u: vec![0.0; m],
            f: vec![0.0; n],
            r: vec![0.0; n],
        }
    }

    /// Squared residual of each state component.
    fn components(
        &mut self,
        traj: &RepresentedTrajectory,
        ocp: &OcpDefinition,
        k: usize,
        s: f64,
    ) -> &[f64] {
        traj.state_in(k, s, &mut self.x);
        traj.state_derivative_in(k, s, &mut self.dx);
        traj.input_in(k, s, &mut self.u);
        let t = traj.time_in(k, s);
        ocp.functions()
            .dynamics(&self.x, &self.u, t, traj.params(), &mut self.f);
        for q in 0..self.r.len() {
            let e = self.dx[q] - self.f[q];
            self.r[q] = e * e;
        }
        &self.r
    }
}

/// Gauss quadrature of the squared residual over every interval of `traj`.
pub fn trajectory_residual(
    traj: &RepresentedTrajectory,
    ocp: &OcpDefinition,
    rule: &QuadratureRule,
) -> ResidualReport {
    let n = traj.states();
    let times = traj.interval_times();
    let mut scratch = Scratch::new(traj);
    let mut per_interval = Vec::with_capacity(times.len() - 1);
    let mut per_state = vec![0.0; n];
    for k in 0..times.len() - 1 {
        let half = 0.5 * (times[k + 1] - times[k]);
        let mut rk = 0.0;
        for (node, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = 0.5 * (node + 1.0);
            for (q, r) in scratch.components(traj, ocp, k, s).iter().enumerate() {
                let v = w * half * r;
                rk += v;
                per_state[q] += v;
            }
        }
        per_interval.push(rk);
    }
    ResidualReport {
        total: per_interval.iter().sum(),
        per_interval,
        per_state,
    }
}

/// Residual components scaled by the square roots of the quadrature
/// weights, so that their sum of squares is the integrated residual.
/// Writes NaN when `z` cannot be represented.
fn weighted_residuals_into(
    z: &DecisionData,
    mesh: &Mesh,
    ocp: &OcpDefinition,
    rule: &QuadratureRule,
    out: &mut [f64],
) {
    let Ok(traj) = RepresentedTrajectory::reconstruct(z, mesh, ocp, ClosureMode::ContinuityClosed)
    else {
        out.fill(f64::NAN);
        return;
    };
    let n = traj.states();
    let times = traj.interval_times();
    let mut scratch = Scratch::new(&traj);
    let mut chunks = out.chunks_exact_mut(n);
    for k in 0..times.len() - 1 {
        let half = 0.5 * (times[k + 1] - times[k]);
        for (node, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = 0.5 * (node + 1.0);
            let sw = (w * half).sqrt();
            scratch.components(&traj, ocp, k, s);
            let chunk = chunks.next().expect("residual count");
            for q in 0..n {
                chunk[q] = sw * (scratch.dx[q] - scratch.f[q]);
            }
        }
    }
}

pub(crate) fn integrated_residual_with(
    z: &DecisionData,
    mesh: &Mesh,
    ocp: &OcpDefinition,
    rule: &QuadratureRule,
) -> Result<ResidualReport> {
    let traj = RepresentedTrajectory::reconstruct(z, mesh, ocp, ClosureMode::ContinuityClosed)?;
    Ok(trajectory_residual(&traj, ocp, rule))
}

/// Integrated residual of the continuity-closed representation of `z`.
pub fn integrated_residual(
    z: &DecisionData,
    mesh: &Mesh,
    ocp: &OcpDefinition,
) -> Result<ResidualReport> {
    let rule = gauss_legendre(mesh.quadrature_order())?;
    integrated_residual_with(z, mesh, ocp, &rule)
}

pub fn resmin_constraint_count(mesh: &Mesh, ocp: &OcpDefinition) -> usize {
    mesh.node_count() * ocp.dims.path + 1 + ocp.dims.boundary
}

/// Minimize the integrated residual subject to the path constraints at every
/// node, `discrete_cost(z) - cost_bound <= 0` and the boundary conditions,
/// starting from `start`. The inequality rows are the node path constraints
/// followed by the cost bound.
pub fn assemble_resmin_nlp<'a>(
    ocp: &'a OcpDefinition,
    mesh: &'a Mesh,
    cost_bound: f64,
    start: &DecisionData,
) -> Result<NlpProblem<'a>> {
    start.validate(mesh, ocp)?;
    let rule = gauss_legendre(mesh.quadrature_order())?;
    let n_path = mesh.node_count() * ocp.dims.path;
    let (lo, hi) = decision_bounds(mesh, ocp);
    let decode = move |v: &[f64]| unpack(v, mesh, ocp).expect("decision vector length");
    let count = mesh.intervals() * rule.order * ocp.dims.states;
    let problem = NlpProblem::least_squares(pack(start, ocp), count, move |v, out| {
        weighted_residuals_into(&decode(v), mesh, ocp, &rule, out)
    })
    .with_equalities(ocp.dims.boundary, move |v, out| {
        boundary_into(&decode(v), ocp, out)
    })
    .with_inequalities(n_path + 1, move |v, out| {
        let z = decode(v);
        node_path_constraints_into(&z, mesh, ocp, &mut out[..n_path]);
        out[n_path] = discrete_cost_unchecked(&z, mesh, ocp) - cost_bound;
    })
    .with_bounds(lo, hi)
    .with_variable_scales(decision_scales(mesh, ocp));
    Ok(problem)
}

#[derive(Debug, Clone)]
pub struct ResminSolution {
    pub decision: DecisionData,
    pub report: ResidualReport,
    pub result: NlpResult,
    /// The solver stopped without convergence at a point worse than the
    /// start, so the start was returned instead.
    pub reverted: bool,
}

/// Solve the representation problem warm-started from the collocation
/// solution `z_c` with discrete cost `j_c`.
///
/// If the solver fails and its final iterate has a larger residual than
/// `z_c` or violates the constraints by more than the tolerance, `z_c` is
/// returned together with the solver diagnostics.
pub fn solve_resmin(
    ocp: &OcpDefinition,
    mesh: &Mesh,
    z_c: &DecisionData,
    j_c: f64,
    options: &NlpOptions,
) -> Result<ResminSolution> {
    options.validate()?;
    let problem = assemble_resmin_nlp(ocp, mesh, j_c, z_c)?;
    let start_report = integrated_residual(z_c, mesh, ocp)?;
    let result = nlp::solve(&problem, options, None);
    let decision = unpack(&result.solution, mesh, ocp)?;
    let report = integrated_residual(&decision, mesh, ocp)?;
    let worse =
        !(report.total <= start_report.total) || result.max_violation() > options.kkt_tolerance;
    if !result.converged() && worse {
        return Ok(ResminSolution {
            decision: z_c.clone(),
            report: start_report,
            result,
            reverted: true,
        });
    }
    Ok(ResminSolution {
        decision,
        report,
        result,
        reverted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Scheme;
    use crate::test_problems::{exponential, integrator};
    use crate::transcription::{default_guess, solve_collocation};

    fn cubic_integrator(mesh: &Mesh) -> (OcpDefinition, DecisionData) {
        let ocp = integrator();
        let mut z = default_guess(&ocp, mesh);
        let times = z.node_times(mesh);
        z.states = times.iter().map(|&t| t - t * t + t * t * t).collect();
        z.inputs = times.iter().map(|&t| 1.0 - 2.0 * t + 3.0 * t * t).collect();
        (ocp, z)
    }

    #[test]
    fn representable_dynamics_have_zero_residual() {
        let mesh = Mesh::new(vec![0.5, 0.2, 0.3], Scheme::HermiteSimpson, 13).unwrap();
        let (ocp, z) = cubic_integrator(&mesh);
        let rep = integrated_residual(&z, &mesh, &ocp).unwrap();
        assert!(rep.total < 1e-20, "{}", rep.total);
        let tr = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed)
            .unwrap();
        for i in 0..=20 {
            assert!(residual_at(&tr, &ocp, i as f64 / 20.0).unwrap() < 1e-24);
        }
        assert!(residual_at(&tr, &ocp, 1.5).is_err());
    }

    /// One H-S interval of `x' = x` on `[0, h]` with the defects solved exactly.
    fn feasible_exponential(h: f64) -> (OcpDefinition, Mesh, DecisionData) {
        let ocp = exponential();
        let mesh = Mesh::uniform(1, Scheme::HermiteSimpson).unwrap();
        // X2 (1 - 0) - X3 (1/2 - h/8) = X1 (1/2 + h/8)
        // -4h/6 X2 + (1 - h/6) X3 = X1 (1 + h/6)
        let x1 = 1.0;
        let (a11, a12, b1) = (1.0, -(0.5 - h / 8.0), x1 * (0.5 + h / 8.0));
        let (a21, a22, b2) = (-4.0 * h / 6.0, 1.0 - h / 6.0, x1 * (1.0 + h / 6.0));
        let det = a11 * a22 - a12 * a21;
        let x2 = (b1 * a22 - a12 * b2) / det;
        let x3 = (a11 * b2 - a21 * b1) / det;
        let mut z = default_guess(&ocp, &mesh);
        z.tf = h;
        z.states = vec![x1, x2, x3];
        (ocp, mesh, z)
    }

    #[test]
    fn collocation_points_have_zero_residual() {
        let h = 0.4;
        let (ocp, mesh, z) = feasible_exponential(h);
        let d = crate::transcription::defect_constraints(&z, &mesh, &ocp).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        let tr = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed)
            .unwrap();
        for t in [0.0, 0.5 * h, h] {
            assert!(residual_at(&tr, &ocp, t).unwrap() < 1e-28);
        }
        // Hermite cubic through (0, X1, X1') and (h, X3, X3') with x' = x
        let (x1, x3) = (z.states[0], z.states[2]);
        let hermite = |t: f64| {
            let s = t / h;
            let (h00, h10) = (
                2.0 * s.powi(3) - 3.0 * s * s + 1.0,
                s.powi(3) - 2.0 * s * s + s,
            );
            let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
            let (d00, d10) = (6.0 * s * s - 6.0 * s, 3.0 * s * s - 4.0 * s + 1.0);
            let (d01, d11) = (-6.0 * s * s + 6.0 * s, 3.0 * s * s - 2.0 * s);
            let x = h00 * x1 + h10 * h * x1 + h01 * x3 + h11 * h * x3;
            let dx = (d00 * x1 + d10 * h * x1 + d01 * x3 + d11 * h * x3) / h;
            (dx - x).powi(2)
        };
        for t in [0.03, 0.11, 0.29, 0.37] {
            let r = residual_at(&tr, &ocp, t).unwrap();
            assert!((r - hermite(t)).abs() < 1e-12, "{r} vs {}", hermite(t));
            assert!(r > 0.0);
        }
    }

    #[test]
    fn report_sums() {
        let ocp = exponential();
        let mesh = Mesh::uniform(4, Scheme::Trapezoidal).unwrap();
        let mut z = default_guess(&ocp, &mesh);
        z.states = vec![1.0, 0.5, 2.0, -1.0, 0.0];
        let rep = integrated_residual(&z, &mesh, &ocp).unwrap();
        let s: f64 = rep.per_interval.iter().sum();
        assert!((s - rep.total).abs() <= 1e-15 * rep.total);
        assert!((rep.per_state[0] - rep.total).abs() < 1e-13 * rep.total);
        assert!(rep.per_interval.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn resmin_problem_shape_and_start_feasibility() {
        let ocp = integrator();
        let mesh = Mesh::uniform(3, Scheme::HermiteSimpson).unwrap();
        let mut guess = default_guess(&ocp, &mesh);
        guess.inputs.iter_mut().for_each(|u| *u = 1.0);
        let sol = solve_collocation(&ocp, &mesh, &guess, &NlpOptions::default()).unwrap();
        let p = assemble_resmin_nlp(&ocp, &mesh, sol.cost, &sol.decision).unwrap();
        assert_eq!(
            p.equality_count() + p.inequality_count(),
            resmin_constraint_count(&mesh, &ocp)
        );
        assert_eq!(p.equality_count(), 1);
        let ineq = p.inequalities(p.initial());
        assert_eq!(ineq, vec![0.0]);
        assert!(p.equalities(p.initial())[0].abs() < 1e-9);
    }

    #[test]
    fn already_optimal_start_is_kept() {
        let mesh = Mesh::uniform(3, Scheme::HermiteSimpson).unwrap();
        let (ocp, z) = cubic_integrator(&mesh);
        let sol = solve_resmin(&ocp, &mesh, &z, 0.0, &NlpOptions::default()).unwrap();
        assert!(sol.result.converged(), "{}", sol.result.message);
        assert!(sol.report.total < 1e-18);
        for (a, b) in sol.decision.states.iter().zip(&z.states) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
