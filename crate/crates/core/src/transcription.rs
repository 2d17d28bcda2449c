//! Direct collocation transcription of an [`OcpDefinition`] on a [`Mesh`].
//!
//! Per interval `k` of width `h = (tf - t0) * fraction_k` with node dynamics
//! `F_i = f(X_i, U_i, t_i, p)` the defects are
//!
//! * Euler: `X2 - X1 - h F1`
//! * Trapezoidal: `X2 - X1 - h/2 (F1 + F2)`
//! * Hermite-Simpson: `X2 - (X1 + X3)/2 - h/8 (F1 - F3)` and
//!   `X3 - X1 - h/6 (F1 + 4 F2 + F3)`
//!
//! where for Hermite-Simpson `X2` is the midpoint node.

use crate::error::{Error, Result};
use crate::mesh::{pack, unpack, DecisionData, Layout, Mesh, Scheme};
use crate::nlp::{self, NlpOptions, NlpProblem, NlpResult, WarmStart};
use crate::ocp::{mid_or_zero, OcpDefinition, TimeMode};

/// Dynamics at every node, node-major.
pub(crate) fn node_dynamics(z: &DecisionData, times: &[f64], ocp: &OcpDefinition) -> Vec<f64> {
    let n = z.n;
    let mut f = vec![0.0; n * times.len()];
    for (j, &t) in times.iter().enumerate() {
        ocp.functions().dynamics(
            z.state(j),
            z.input(j),
            t,
            &z.params,
            &mut f[j * n..(j + 1) * n],
        );
    }
    f
}

pub(crate) fn interval_widths(z: &DecisionData, mesh: &Mesh) -> Vec<f64> {
    let dt = z.horizon();
    mesh.fractions().iter().map(|f| dt * f).collect()
}

pub(crate) fn defects_into(z: &DecisionData, mesh: &Mesh, ocp: &OcpDefinition, out: &mut [f64]) {
    let n = z.n;
    let times = z.node_times(mesh);
    let f = node_dynamics(z, &times, ocp);
    let fnode = |j: usize| &f[j * n..(j + 1) * n];
    let widths = interval_widths(z, mesh);
    let blocks = mesh.nodes_per_interval() - 1;
    for (k, &h) in widths.iter().enumerate() {
        let row = &mut out[k * blocks * n..(k + 1) * blocks * n];
        match mesh.scheme() {
            Scheme::Euler => {
                let (a, b) = (mesh.node_index(k, 0), mesh.node_index(k, 1));
                for q in 0..n {
                    row[q] = z.state(b)[q] - z.state(a)[q] - h * fnode(a)[q];
                }
            }
            Scheme::Trapezoidal => {
                let (a, b) = (mesh.node_index(k, 0), mesh.node_index(k, 1));
                for q in 0..n {
                    row[q] = z.state(b)[q] - z.state(a)[q] - 0.5 * h * (fnode(a)[q] + fnode(b)[q]);
                }
            }
            Scheme::HermiteSimpson => {
                let (a, m, b) = (
                    mesh.node_index(k, 0),
                    mesh.node_index(k, 1),
                    mesh.node_index(k, 2),
                );
                let (xa, xm, xb) = (z.state(a), z.state(m), z.state(b));
                let (fa, fm, fb) = (fnode(a), fnode(m), fnode(b));
                for q in 0..n {
                    row[q] = xm[q] - 0.5 * (xa[q] + xb[q]) - h / 8.0 * (fa[q] - fb[q]);
                    row[n + q] = xb[q] - xa[q] - h / 6.0 * (fa[q] + 4.0 * fm[q] + fb[q]);
                }
            }
        }
    }
}

pub fn defect_count(mesh: &Mesh, ocp: &OcpDefinition) -> usize {
    ocp.dims.states * (mesh.nodes_per_interval() - 1) * mesh.intervals()
}

/// Collocation defects, interval-major; Hermite-Simpson yields the midpoint
/// block then the Simpson block for each interval.
pub fn defect_constraints(z: &DecisionData, mesh: &Mesh, ocp: &OcpDefinition) -> Result<Vec<f64>> {
    z.validate(mesh, ocp)?;
    if let Some(h) = interval_widths(z, mesh).into_iter().find(|h| !(*h > 0.0)) {
        return Err(Error::NonPositiveWidth(h));
    }
    let mut out = vec![0.0; defect_count(mesh, ocp)];
    defects_into(z, mesh, ocp, &mut out);
    Ok(out)
}

/// Quadrature weights of each local node, as multiples of the interval width.
pub(crate) fn cost_weights(scheme: Scheme) -> &'static [f64] {
    match scheme {
        Scheme::Euler => &[1.0, 0.0],
        Scheme::Trapezoidal => &[0.5, 0.5],
        Scheme::HermiteSimpson => &[1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
    }
}

pub(crate) fn discrete_cost_unchecked(z: &DecisionData, mesh: &Mesh, ocp: &OcpDefinition) -> f64 {
    let fun = ocp.functions();
    let mut cost = fun.mayer_cost(z.first_state(), z.t0, z.last_state(), z.tf, &z.params);
    let times = z.node_times(mesh);
    let weights = cost_weights(mesh.scheme());
    for (k, h) in interval_widths(z, mesh).into_iter().enumerate() {
        for (i, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let j = mesh.node_index(k, i);
            cost += w * h * fun.lagrange_cost(z.state(j), z.input(j), times[j], &z.params);
        }
    }
    cost
}

/// Mayer term plus the scheme's quadrature of the running cost.
pub fn discrete_cost(z: &DecisionData, mesh: &Mesh, ocp: &OcpDefinition) -> Result<f64> {
    z.validate(mesh, ocp)?;
    Ok(discrete_cost_unchecked(z, mesh, ocp))
}

/// Path constraints at every node, node-major.
pub(crate) fn node_path_constraints_into(
    z: &DecisionData,
    mesh: &Mesh,
    ocp: &OcpDefinition,
    out: &mut [f64],
) {
    let ng = ocp.dims.path;
    if ng == 0 {
        return;
    }
    for (j, t) in z.node_times(mesh).into_iter().enumerate() {
        ocp.functions().path_constraint(
            z.state(j),
            z.input(j),
            t,
            &z.params,
            &mut out[j * ng..(j + 1) * ng],
        );
    }
}

pub(crate) fn boundary_into(z: &DecisionData, ocp: &OcpDefinition, out: &mut [f64]) {
    ocp.functions()
        .boundary(z.first_state(), z.t0, z.last_state(), z.tf, &z.params, out);
}

/// Bounds of the flat decision vector.
pub fn decision_bounds(mesh: &Mesh, ocp: &OcpDefinition) -> (Vec<f64>, Vec<f64>) {
    let layout = Layout::new(mesh, ocp);
    let mut lo = Vec::with_capacity(layout.len());
    let mut hi = Vec::with_capacity(layout.len());
    for _ in 0..layout.nodes {
        lo.extend_from_slice(&ocp.bounds.state.lower);
        hi.extend_from_slice(&ocp.bounds.state.upper);
    }
    for _ in 0..layout.nodes {
        lo.extend_from_slice(&ocp.bounds.input.lower);
        hi.extend_from_slice(&ocp.bounds.input.upper);
    }
    lo.extend_from_slice(&ocp.bounds.param.lower);
    hi.extend_from_slice(&ocp.bounds.param.upper);
    if let TimeMode::FreeFinal {
        tf_lower, tf_upper, ..
    } = ocp.time
    {
        lo.push(tf_lower);
        hi.push(tf_upper);
    }
    (lo, hi)
}

/// Typical magnitudes of the flat decision vector, from the problem hints.
pub fn decision_scales(mesh: &Mesh, ocp: &OcpDefinition) -> Vec<f64> {
    let layout = Layout::new(mesh, ocp);
    let h = &ocp.hints;
    let pick = |v: &Option<Vec<f64>>, dim: usize| v.clone().unwrap_or_else(|| vec![1.0; dim]);
    let xs = pick(&h.state_scale, layout.n);
    let us = pick(&h.input_scale, layout.m);
    let ps = pick(&h.param_scale, layout.s);
    let mut scales = Vec::with_capacity(layout.len());
    for _ in 0..layout.nodes {
        scales.extend_from_slice(&xs);
    }
    for _ in 0..layout.nodes {
        scales.extend_from_slice(&us);
    }
    scales.extend_from_slice(&ps);
    if layout.free_final_time {
        let tf = match ocp.time {
            TimeMode::FreeFinal { tf_upper, .. } if tf_upper.is_finite() => tf_upper.abs().max(1.0),
            _ => 1.0,
        };
        scales.push(tf);
    }
    scales
}

/// Straight line between the hinted endpoint states, inputs and parameters
/// at the midpoints of their bounds, free final time at the midpoint of its bounds.
pub fn default_guess(ocp: &OcpDefinition, mesh: &Mesh) -> DecisionData {
    let n = ocp.dims.states;
    let mid_state = ocp.bounds.state.midpoint();
    let x0 = ocp
        .hints
        .initial_state
        .clone()
        .unwrap_or_else(|| mid_state.clone());
    let xf = ocp.hints.final_state.clone().unwrap_or(mid_state);
    let taus = mesh.node_taus();
    let mut states = Vec::with_capacity(n * taus.len());
    for tau in &taus {
        for q in 0..n {
            let v = x0[q] + tau * (xf[q] - x0[q]);
            states.push(v.clamp(ocp.bounds.state.lower[q], ocp.bounds.state.upper[q]));
        }
    }
    let u = ocp.bounds.input.midpoint();
    let inputs = taus.iter().flat_map(|_| u.iter().copied()).collect();
    let (t0, tf) = match ocp.time {
        TimeMode::Fixed { t0, tf } => (t0, tf),
        TimeMode::FreeFinal {
            t0,
            tf_lower,
            tf_upper,
        } => (t0, mid_or_zero(tf_lower, tf_upper)),
    };
    DecisionData {
        n,
        m: ocp.dims.inputs,
        states,
        inputs,
        params: ocp.bounds.param.midpoint(),
        t0,
        tf,
    }
}

/// The collocation NLP: objective is the discrete cost, equalities are the
/// defects followed by the boundary conditions, inequalities are the path
/// constraints at every node.
pub fn assemble_collocation_nlp<'a>(
    ocp: &'a OcpDefinition,
    mesh: &'a Mesh,
    guess: &DecisionData,
) -> Result<NlpProblem<'a>> {
    guess.validate(mesh, ocp)?;
    let n_defects = defect_count(mesh, ocp);
    let n_eq = n_defects + ocp.dims.boundary;
    let n_ineq = mesh.node_count() * ocp.dims.path;
    let (lo, hi) = decision_bounds(mesh, ocp);
    let decode = move |v: &[f64]| unpack(v, mesh, ocp).expect("decision vector length");
    let problem = NlpProblem::new(pack(guess, ocp), move |v| {
        discrete_cost_unchecked(&decode(v), mesh, ocp)
    })
    .with_equalities(n_eq, move |v, out| {
        let z = decode(v);
        defects_into(&z, mesh, ocp, &mut out[..n_defects]);
        boundary_into(&z, ocp, &mut out[n_defects..]);
    })
    .with_inequalities(n_ineq, move |v, out| {
        node_path_constraints_into(&decode(v), mesh, ocp, out)
    })
    .with_bounds(lo, hi)
    .with_variable_scales(decision_scales(mesh, ocp));
    Ok(problem)
}

#[derive(Debug, Clone)]
pub struct CollocationSolution {
    pub decision: DecisionData,
    /// Discrete cost at the solution.
    pub cost: f64,
    pub result: NlpResult,
}

pub fn solve_collocation(
    ocp: &OcpDefinition,
    mesh: &Mesh,
    guess: &DecisionData,
    options: &NlpOptions,
) -> Result<CollocationSolution> {
    options.validate()?;
    let problem = assemble_collocation_nlp(ocp, mesh, guess)?;
    let result = nlp::solve(&problem, options, None::<&WarmStart>);
    let decision = unpack(&result.solution, mesh, ocp)?;
    let cost = discrete_cost_unchecked(&decision, mesh, ocp);
    Ok(CollocationSolution {
        decision,
        cost,
        result,
    })
}
