//! Oracles shared by the integration tests.

use resmin_core::mesh::{DecisionData, Mesh};
use resmin_core::problems::LinearProblem;

/// Squared residual of the continuity-closed cubic built from node values
/// by Lagrange interpolation plus the cubic correction matching the start slope.
pub fn closed_cubic_residual(p: &LinearProblem, z: &DecisionData, mesh: &Mesh, t: f64) -> f64 {
    let k_count = mesh.intervals();
    let h = (z.tf - z.t0) / k_count as f64;
    let k = ((t / h).floor() as usize).min(k_count - 1);
    let s = (t - k as f64 * h) / h;
    let x = |i: usize| z.states[2 * k + i];
    let u = |i: usize| z.inputs[2 * k + i];
    let lag = |v: [f64; 3], s: f64| {
        v[0] * 2.0 * (s - 0.5) * (s - 1.0) - v[1] * 4.0 * s * (s - 1.0) + v[2] * 2.0 * s * (s - 0.5)
    };
    let lag_d = |v: [f64; 3], s: f64| {
        v[0] * (4.0 * s - 3.0) - v[1] * (8.0 * s - 4.0) + v[2] * (4.0 * s - 1.0)
    };
    let xs = [x(0), x(1), x(2)];
    let f1 = p.a * x(0) + u(0);
    let c = 2.0 * (f1 * h - lag_d(xs, 0.0));
    let state = lag(xs, s) + c * s * (s - 0.5) * (s - 1.0);
    let slope = (lag_d(xs, s) + c * (3.0 * s * s - 3.0 * s + 0.5)) / h;
    let input = lag([u(0), u(1), u(2)], s);
    (slope - p.a * state - input).powi(2)
}
