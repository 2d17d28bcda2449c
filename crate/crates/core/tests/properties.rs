//! Property tests of the library invariants.

use std::sync::Arc;

use proptest::prelude::*;

use resmin_core::error_analysis::{absolute_local_error, constraint_violation};
use resmin_core::mesh::{pack, unpack, DecisionData, Mesh, Scheme};
use resmin_core::nlp::{self, fd_gradient, NlpOptions, NlpProblem};
use resmin_core::ocp::{BoxBounds, Dimensions, OcpDefinition, OcpFunctions, SimpleBounds, TimeMode};
use resmin_core::pipeline::{run_pipeline, PipelineOptions};
use resmin_core::problems::{benchmark, linear_problem, LinearProblem, ProblemId};
use resmin_core::quadrature::gauss_legendre;
use resmin_core::residual::{integrated_residual, solve_resmin};
use resmin_core::sim::{simulate, SimOptions};
use resmin_core::trajectory::{ClosureMode, RepresentedTrajectory};
use resmin_core::transcription::{default_guess, defect_constraints, discrete_cost, solve_collocation};

mod common;
use common::closed_cubic_residual;

/// `x' = c0 + c1 t + c2 t^2 + c3 t^3` with constant running cost.
struct Poly {
    c: [f64; 4],
    running: f64,
}

impl OcpFunctions for Poly {
    fn dynamics(&self, _x: &[f64], _u: &[f64], t: f64, _p: &[f64], dx: &mut [f64]) {
        dx[0] = self.c[0] + t * (self.c[1] + t * (self.c[2] + t * self.c[3]));
    }

    fn lagrange_cost(&self, _x: &[f64], _u: &[f64], _t: f64, _p: &[f64]) -> f64 {
        self.running
    }
}

fn poly_ocp(c: [f64; 4], running: f64, tf: f64) -> OcpDefinition {
    let dims = Dimensions { states: 1, inputs: 1, params: 0, path: 0, boundary: 0 };
    let bounds = SimpleBounds {
        state: BoxBounds::unbounded(1),
        input: BoxBounds::unbounded(1),
        param: BoxBounds::unbounded(0),
    };
    OcpDefinition::new("poly", dims, Arc::new(Poly { c, running }), bounds, TimeMode::Fixed { t0: 0.0, tf })
        .unwrap()
}

/// `x' = u`, `x(0) = 0`, `x <= cap`, cost `(x - 1)^2 + 1e-2 u^2`.
struct Capped {
    cap: f64,
}

impl OcpFunctions for Capped {
    fn dynamics(&self, _x: &[f64], u: &[f64], _t: f64, _p: &[f64], dx: &mut [f64]) {
        dx[0] = u[0];
    }

    fn lagrange_cost(&self, x: &[f64], u: &[f64], _t: f64, _p: &[f64]) -> f64 {
        (x[0] - 1.0).powi(2) + 1e-2 * u[0] * u[0]
    }

    fn path_constraint(&self, x: &[f64], _u: &[f64], _t: f64, _p: &[f64], out: &mut [f64]) {
        out[0] = x[0] - self.cap;
    }

    fn boundary(&self, x0: &[f64], _t0: f64, _xf: &[f64], _tf: f64, _p: &[f64], out: &mut [f64]) {
        out[0] = x0[0];
    }
}

fn capped(cap: f64) -> OcpDefinition {
    let dims = Dimensions { states: 1, inputs: 1, params: 0, path: 1, boundary: 1 };
    let bounds = SimpleBounds {
        state: BoxBounds::unbounded(1),
        input: BoxBounds::new(vec![-5.0], vec![5.0]),
        param: BoxBounds::unbounded(0),
    };
    OcpDefinition::new("capped", dims, Arc::new(Capped { cap }), bounds, TimeMode::Fixed { t0: 0.0, tf: 1.0 })
        .unwrap()
}

const SCHEMES: [Scheme; 3] = [Scheme::Euler, Scheme::Trapezoidal, Scheme::HermiteSimpson];

fn mesh_from(widths: &[f64], scheme: Scheme) -> Mesh {
    let total: f64 = widths.iter().sum();
    let mut fr: Vec<f64> = widths.iter().map(|w| w / total).collect();
    let head: f64 = fr[..fr.len() - 1].iter().sum();
    *fr.last_mut().unwrap() = 1.0 - head;
    Mesh::new(fr, scheme, scheme.default_quadrature_order()).unwrap()
}

/// Draw a value inside `[lo, hi]`, using `[-span, span]` for infinite sides.
fn within(lo: f64, hi: f64, span: f64, s: f64) -> f64 {
    let (a, b) = (lo.max(-span), hi.min(span));
    let (a, b) = if a <= b { (a, b) } else { (lo, lo) };
    a + (b - a) * s
}

fn random_decision(ocp: &OcpDefinition, mesh: &Mesh, draws: &[f64], tf: f64) -> DecisionData {
    let mut z = default_guess(ocp, mesh);
    let mut i = 0;
    let mut next = || {
        i += 1;
        draws[i % draws.len()] * (1.0 + (i % 7) as f64 * 0.1) % 1.0
    };
    for node in 0..z.node_count() {
        for (q, v) in z.state_mut(node).iter_mut().enumerate() {
            *v = within(ocp.bounds.state.lower[q], ocp.bounds.state.upper[q], 5.0, next());
        }
        for (q, v) in z.input_mut(node).iter_mut().enumerate() {
            *v = within(ocp.bounds.input.lower[q], ocp.bounds.input.upper[q], 5.0, next());
        }
    }
    if ocp.time.is_free_final() {
        z.tf = tf;
    }
    z
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn benchmark_functions_are_pure_and_sized(id in 0usize..3, draws in prop::collection::vec(0.0..1.0f64, 16), t in 0.0..1.0f64) {
        let id = [ProblemId::Linear, ProblemId::RobotArm, ProblemId::Windshear][id];
        let ocp = benchmark(id, None).unwrap().ocp;
        let d = &ocp.dims;
        let b = &ocp.bounds;
        let pick = |bx: &BoxBounds, off: usize| -> Vec<f64> {
            (0..bx.len()).map(|i| within(bx.lower[i], bx.upper[i], 10.0, draws[(i + off) % draws.len()])).collect()
        };
        let (x, u, p, xf) = (pick(&b.state, 0), pick(&b.input, 5), pick(&b.param, 9), pick(&b.state, 3));
        let t = ocp.time.t0() + t;
        let eval = || {
            (
                ocp.dynamics_at(&x, &u, t, &p).unwrap(),
                ocp.path_constraint_at(&x, &u, t, &p).unwrap(),
                ocp.boundary_residual(&x, 0.0, &xf, 1.0 + t, &p).unwrap(),
                ocp.lagrange_at(&x, &u, t, &p).unwrap(),
                ocp.mayer_at(&x, 0.0, &xf, 1.0 + t, &p).unwrap(),
            )
        };
        let (a, b2) = (eval(), eval());
        prop_assert_eq!(a.0.len(), d.states);
        prop_assert_eq!(a.1.len(), d.path);
        prop_assert_eq!(a.2.len(), d.boundary);
        prop_assert_eq!(bits(&a.0), bits(&b2.0));
        prop_assert_eq!(bits(&a.1), bits(&b2.1));
        prop_assert_eq!(bits(&a.2), bits(&b2.2));
        prop_assert_eq!(a.3.to_bits(), b2.3.to_bits());
        prop_assert_eq!(a.4.to_bits(), b2.4.to_bits());
    }

    #[test]
    fn exact_polynomial_states_have_zero_defects(
        scheme in 0usize..3,
        c in prop::array::uniform4(-2.0..2.0f64),
        widths in prop::collection::vec(0.2..1.0f64, 1..8),
        tf in 0.5..3.0f64,
    ) {
        let scheme = SCHEMES[scheme];
        let degree = match scheme { Scheme::Euler => 0, Scheme::Trapezoidal => 1, Scheme::HermiteSimpson => 2 };
        let mut c = c;
        c[degree + 1..].iter_mut().for_each(|v| *v = 0.0);
        let ocp = poly_ocp(c, 0.0, tf);
        let mesh = mesh_from(&widths, scheme);
        let mut z = default_guess(&ocp, &mesh);
        let x = |t: f64| t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)));
        z.states = z.node_times(&mesh).iter().map(|&t| x(t)).collect();
        let defects = defect_constraints(&z, &mesh, &ocp).unwrap();
        prop_assert!(defects.iter().all(|d| d.abs() <= 1e-12), "{defects:?}");
    }

    #[test]
    fn constant_running_cost_integrates_to_horizon(
        scheme in 0usize..3,
        running in -3.0..3.0f64,
        widths in prop::collection::vec(0.1..1.0f64, 1..10),
        tf in 0.5..4.0f64,
    ) {
        let ocp = poly_ocp([0.0; 4], running, tf);
        let mesh = mesh_from(&widths, SCHEMES[scheme]);
        let z = default_guess(&ocp, &mesh);
        let j = discrete_cost(&z, &mesh, &ocp).unwrap();
        prop_assert!((j - running * tf).abs() <= 1e-12 * (1.0 + (running * tf).abs()));
    }

    #[test]
    fn pack_unpack_round_trip(
        scheme in 0usize..3,
        draws in prop::collection::vec(0.0..1.0f64, 1..40),
        widths in prop::collection::vec(0.1..1.0f64, 1..6),
        tf in 1.0..5.0f64,
    ) {
        let ocp = benchmark(ProblemId::RobotArm, None).unwrap().ocp;
        let mesh = mesh_from(&widths, SCHEMES[scheme]);
        let z = random_decision(&ocp, &mesh, &draws, tf);
        let back = unpack(&pack(&z, &ocp), &mesh, &ocp).unwrap();
        prop_assert_eq!(bits(&back.states), bits(&z.states));
        prop_assert_eq!(bits(&back.inputs), bits(&z.inputs));
        prop_assert_eq!(back.tf.to_bits(), z.tf.to_bits());
        prop_assert_eq!(back.t0.to_bits(), z.t0.to_bits());
    }

    #[test]
    fn closed_state_reproduces_nodes_and_degree(
        scheme in 0usize..3,
        draws in prop::collection::vec(0.0..1.0f64, 1..40),
        widths in prop::collection::vec(0.1..1.0f64, 1..6),
        tf in 1.0..5.0f64,
    ) {
        let scheme = SCHEMES[scheme];
        let ocp = benchmark(ProblemId::RobotArm, None).unwrap().ocp;
        let mesh = mesh_from(&widths, scheme);
        let z = random_decision(&ocp, &mesh, &draws, tf);
        let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &ocp, ClosureMode::ContinuityClosed).unwrap();
        let n = ocp.dims.states;
        let per = mesh.nodes_per_interval();
        let taus: Vec<f64> = match scheme { Scheme::HermiteSimpson => vec![0.0, 0.5, 1.0], _ => vec![0.0, 1.0] };
        let mut x = vec![0.0; n];
        for k in 0..mesh.intervals() {
            for (i, s) in taus.iter().enumerate() {
                traj.state_in(k, *s, &mut x);
                let stored = z.state(k * (per - 1) + i);
                for q in 0..n {
                    prop_assert!((x[q] - stored[q]).abs() <= 1e-12 * (1.0 + stored[q].abs()), "k {} node {} state {}", k, i, q);
                }
            }
            // divided differences of order degree + 1 vanish on equispaced samples
            let degree = match scheme { Scheme::Euler => 1, Scheme::Trapezoidal => 2, Scheme::HermiteSimpson => 3 };
            for q in 0..n {
                let mut d: Vec<f64> = (0..=degree + 1)
                    .map(|j| {
                        traj.state_in(k, j as f64 / (degree + 1) as f64, &mut x);
                        x[q]
                    })
                    .collect();
                let scale = d.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
                for _ in 0..=degree {
                    d = d.windows(2).map(|w| w[1] - w[0]).collect();
                }
                prop_assert!(d[0].abs() <= 1e-9 * scale, "degree exceeded: {}", d[0]);
            }
        }
    }

    #[test]
    fn gauss_rules_integrate_monomials(n in 1usize..=40, frac in 0.0..1.0f64) {
        let rule = gauss_legendre(n).unwrap();
        let degree = ((2 * n - 1) as f64 * frac).round() as i32;
        let got: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(degree)).sum();
        let exact = if degree % 2 == 1 { 0.0 } else { 2.0 / f64::from(degree + 1) };
        prop_assert!((got - exact).abs() <= 1e-12, "n {} degree {}: {} vs {}", n, degree, got, exact);
    }

    #[test]
    fn identical_inputs_simulate_identically(
        draws in prop::collection::vec(0.0..1.0f64, 1..30),
        widths in prop::collection::vec(0.2..1.0f64, 2..6),
    ) {
        let p = linear_problem(-1.0);
        let mesh = mesh_from(&widths, Scheme::HermiteSimpson);
        let z = random_decision(&p.ocp, &mesh, &draws, 1.0);
        let direct = RepresentedTrajectory::reconstruct(&z, &mesh, &p.ocp, ClosureMode::Direct).unwrap();
        let closed = RepresentedTrajectory::reconstruct(&z, &mesh, &p.ocp, ClosureMode::ContinuityClosed).unwrap();
        let opts = SimOptions::default();
        let a = simulate(&p.ocp, &direct, z.first_state(), &opts).unwrap();
        let b = simulate(&p.ocp, &closed, z.first_state(), &opts).unwrap();
        prop_assert_eq!(bits(&a.times), bits(&b.times));
        for (sa, sb) in a.states.iter().zip(&b.states) {
            prop_assert_eq!(bits(sa), bits(sb));
        }
        prop_assert_eq!(a.steps, b.steps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nlp_objective_merit_and_determinism(
        target in prop::collection::vec(-3.0..3.0f64, 2..6),
        quartic in 0.0..0.5f64,
        sum in -2.0..2.0f64,
    ) {
        let n = target.len();
        let t2 = target.clone();
        let build = || {
            let t = t2.clone();
            NlpProblem::new(vec![0.5; n], move |v| {
                v.iter().zip(&t).map(|(x, c)| (x - c).powi(2) + quartic * x.powi(4)).sum()
            })
            .with_equalities(1, move |v, out| out[0] = v.iter().sum::<f64>() - sum)
            .with_bounds(vec![-2.0; n], vec![2.0; n])
        };
        let opts = NlpOptions::default();
        let (pa, pb) = (build(), build());
        let a = nlp::solve(&pa, &opts, None);
        let b = nlp::solve(&pb, &opts, None);
        prop_assert!(a.converged(), "{}", a.message);
        let again = pa.objective(&a.solution);
        prop_assert!((again - a.objective).abs() <= 1e-14 * again.abs().max(1e-300));
        for (before, after) in &a.merit_history {
            prop_assert!(after <= before, "merit rose {} -> {}", before, after);
        }
        prop_assert_eq!(bits(&a.solution), bits(&b.solution));
        prop_assert_eq!(a.iterations, b.iterations);
        let ha: Vec<(u64, u64)> = a.merit_history.iter().map(|(x, y)| (x.to_bits(), y.to_bits())).collect();
        let hb: Vec<(u64, u64)> = b.merit_history.iter().map(|(x, y)| (x.to_bits(), y.to_bits())).collect();
        prop_assert_eq!(ha, hb);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn resmin_never_worsens_residual_or_cost(a in -2.0..1.0f64, k in 3usize..8) {
        let p = linear_problem(a);
        let mesh = Mesh::uniform(k, Scheme::HermiteSimpson).unwrap();
        let opts = NlpOptions::default();
        let col = solve_collocation(&p.ocp, &mesh, &default_guess(&p.ocp, &mesh), &opts).unwrap();
        prop_assert!(col.result.converged());
        let before = integrated_residual(&col.decision, &mesh, &p.ocp).unwrap().total;
        let res = solve_resmin(&p.ocp, &mesh, &col.decision, col.cost, &opts).unwrap();
        let after = integrated_residual(&res.decision, &mesh, &p.ocp).unwrap().total;
        prop_assert!(after <= before * (1.0 + 1e-9) + 1e-14, "{} > {}", after, before);
        let cost = discrete_cost(&res.decision, &mesh, &p.ocp).unwrap();
        prop_assert!(cost <= col.cost + 1e-6, "{} > {}", cost, col.cost);
    }

    #[test]
    fn feasible_solutions_have_no_violation_at_nodes(cap in 0.2..0.8f64, k in 3usize..8) {
        let ocp = capped(cap);
        let mesh = Mesh::uniform(k, Scheme::HermiteSimpson).unwrap();
        let col = solve_collocation(&ocp, &mesh, &default_guess(&ocp, &mesh), &NlpOptions::default()).unwrap();
        prop_assert!(col.result.converged(), "{}", col.result.message);
        for mode in [ClosureMode::Direct, ClosureMode::ContinuityClosed] {
            let traj = RepresentedTrajectory::reconstruct(&col.decision, &mesh, &ocp, mode).unwrap();
            // two subdivisions sample exactly the three nodes of every interval
            let at_nodes = constraint_violation(&traj, &ocp, 2)[0];
            prop_assert!(at_nodes <= 1e-9, "{mode}: {at_nodes}");
        }
    }
}

fn state_error(scheme: Scheme, k: usize) -> f64 {
    let p = LinearProblem::with_input_bounds(-1.0, 1.0, 1.0).unwrap();
    let mesh = Mesh::uniform(k, scheme).unwrap();
    let sol = solve_collocation(&p.ocp, &mesh, &default_guess(&p.ocp, &mesh), &NlpOptions::default()).unwrap();
    assert!(sol.result.converged());
    sol.decision
        .node_times(&mesh)
        .iter()
        .zip(&sol.decision.states)
        .map(|(t, x)| (x - p.state_for_constant_input(0.0, 1.0, *t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn linear_collocation_converges_at_scheme_order() {
    for (scheme, min_order) in [(Scheme::Trapezoidal, 1.8), (Scheme::HermiteSimpson, 3.5)] {
        let order = (state_error(scheme, 5) / state_error(scheme, 20)).ln() / 4f64.ln();
        assert!(order >= min_order, "{scheme}: order {order}");
    }
}

#[test]
fn integrator_order_on_linear_benchmark() {
    let p = LinearProblem::with_input_bounds(-1.0, 1.0, 1.0).unwrap();
    let mesh = Mesh::uniform(4, Scheme::HermiteSimpson).unwrap();
    let z = default_guess(&p.ocp, &mesh);
    let traj = RepresentedTrajectory::reconstruct(&z, &mesh, &p.ocp, ClosureMode::Direct).unwrap();
    let exact = p.state_for_constant_input(0.0, 1.0, 1.0);
    let error = |h: f64| {
        let opts = SimOptions { fixed_step: Some(h), samples_per_interval: 1, max_step: Some(h), ..SimOptions::default() };
        let sim = simulate(&p.ocp, &traj, &[0.0], &opts).unwrap();
        (sim.states.last().unwrap()[0] - exact).abs()
    };
    let (e1, e2) = (error(0.125), error(0.0625));
    let order = (e1 / e2).log2();
    assert!(order >= 4.0, "errors {e1:e} {e2:e}, order {order}");
}

#[test]
fn residual_gradient_matches_dense_quadrature() {
    let p = linear_problem(-1.0);
    let mesh = Mesh::uniform(4, Scheme::HermiteSimpson).unwrap();
    let col = solve_collocation(&p.ocp, &mesh, &default_guess(&p.ocp, &mesh), &NlpOptions::default()).unwrap();
    let mut z = col.decision.clone();
    for (i, x) in z.states.iter_mut().enumerate().skip(1) {
        *x += 0.01 * ((i * 7 % 5) as f64 - 2.0);
    }
    let v0 = pack(&z, &p.ocp);
    let r = |v: &[f64]| integrated_residual(&unpack(v, &mesh, &p.ocp).unwrap(), &mesh, &p.ocp).unwrap().total;
    let dense = |v: &[f64]| {
        let z = unpack(v, &mesh, &p.ocp).unwrap();
        let panels = 4000;
        let h = 1.0 / panels as f64;
        let f = |t: f64| closed_cubic_residual(&p, &z, &mesh, t);
        // composite Simpson; the residual jumps at mesh boundaries, so each
        // panel's right edge is evaluated just inside the panel
        (0..panels)
            .map(|i| {
                let a = i as f64 * h;
                h / 6.0 * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h * (1.0 - 1e-9)))
            })
            .sum::<f64>()
    };
    let g = fd_gradient(r, &v0).unwrap();
    let g_dense = fd_gradient(dense, &v0).unwrap();
    let scale = g_dense.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let diff = g.iter().zip(&g_dense).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(diff <= 1e-5 * scale, "gradient mismatch {diff:e} of {scale:e}");
}

#[test]
fn local_error_is_resolved_by_seven_points() {
    let worst = |a: &[f64], b: &[f64], floor: f64| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.max(floor)).fold(0.0, f64::max)
    };
    let mut failures = Vec::new();
    for id in [ProblemId::RobotArm, ProblemId::Windshear] {
        let b = benchmark(id, None).unwrap();
        let out = run_pipeline(&b.ocp, &b.mesh, &b.guess, &PipelineOptions::default()).unwrap();
        for m in &out.modes {
            let coarse = absolute_local_error(&m.trajectory, &b.ocp, &gauss_legendre(7).unwrap());
            let fine = absolute_local_error(&m.trajectory, &b.ocp, &gauss_legendre(15).unwrap());
            let floor = 1e-6 * fine.max_eta();
            let eta = worst(&coarse.eta, &fine.eta, floor);
            let sigma = coarse
                .sigma
                .iter()
                .zip(&fine.sigma)
                .map(|(c, f)| worst(c, f, floor))
                .fold(0.0, f64::max);
            eprintln!("{} {}: eta rel {eta:.3e}, sigma rel {sigma:.3e}", b.ocp.name, m.mode);
            if eta > 0.01 || sigma > 0.01 {
                failures.push(format!("{} {}: eta {eta:.3e}, sigma {sigma:.3e}", b.ocp.name, m.mode));
            }
        }
    }
    assert!(failures.is_empty(), "7- and 15-point rules differ by more than 1%: {failures:?}");
}
