use nalgebra::{DMatrix, DVector};

use super::fd::perturbations;
use super::qp::{solve_qp, QpError, QpProblem, QpSolution};
use super::{clip, DifferenceOrder, HessianApproximation, NlpOptions, NlpProblem, NlpResult, NlpStatus, WarmStart};

/// Function values of the scaled problem at one point.
#[derive(Clone)]
struct Values {
    f: f64,
    ce: Vec<f64>,
    ci: Vec<f64>,
}

impl Values {
    fn infeasibility(&self) -> f64 {
        self.ce.iter().map(|c| c.abs()).sum::<f64>()
            + self.ci.iter().map(|c| c.max(0.0)).sum::<f64>()
    }

    fn merit(&self, penalty: f64) -> f64 {
        self.f + penalty * self.infeasibility()
    }
}

struct Derivatives {
    g: DVector<f64>,
    je: DMatrix<f64>,
    ji: DMatrix<f64>,
}

/// Problem restricted to non-fixed variables, with variable, objective and
/// row scaling applied.
struct Scaled<'p, 'a> {
    p: &'p NlpProblem<'a>,
    free: Vec<usize>,
    var_scale: Vec<f64>,
    base: Vec<f64>,
    f_scale: f64,
    eq_scale: Vec<f64>,
    ineq_scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Scaled<'_, '_> {
    fn full(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = y[k] * self.var_scale[k];
        }
        x
    }

    fn values(&self, y: &[f64]) -> Option<Values> {
        let x = self.full(y);
        let f = self.p.objective(&x) * self.f_scale;
        let mut ce = self.p.equalities(&x);
        let mut ci = self.p.inequalities(&x);
        for (c, s) in ce.iter_mut().zip(&self.eq_scale) {
            *c *= s;
        }
        for (c, s) in ci.iter_mut().zip(&self.ineq_scale) {
            *c *= s;
        }
        let finite = f.is_finite() && ce.iter().chain(&ci).all(|v| v.is_finite());
        finite.then_some(Values { f, ce, ci })
    }

    fn derivatives(&self, y: &[f64], rel: f64, order: DifferenceOrder) -> Option<Derivatives> {
        let nf = y.len();
        let (me, mi) = (self.eq_scale.len(), self.ineq_scale.len());
        let mut g = DVector::zeros(nf);
        let mut je = DMatrix::zeros(me, nf);
        let mut ji = DMatrix::zeros(mi, nf);
        let mut work = y.to_vec();
        let rel = match order {
            DifferenceOrder::Second => rel,
            DifferenceOrder::Fourth => FIFTH_ROOT_EPS,
        };
        for k in 0..nf {
            let (lo, hi) = perturbations(y[k], rel);
            let mut at = |v: f64| {
                work[k] = v;
                let r = self.values(&work);
                work[k] = y[k];
                r
            };
            let (plus, minus) = (at(hi)?, at(lo)?);
            // weights of f(+h), f(-h), f(+2h), f(-2h) over the step h
            let (h, far) = match order {
                DifferenceOrder::Second => (0.5 * (hi - lo), None),
                DifferenceOrder::Fourth => {
                    let h = 0.5 * (hi - lo);
                    (h, Some((at(y[k] + 2.0 * h)?, at(y[k] - 2.0 * h)?)))
                }
            };
            let diff = |p: f64, m: f64, fars: Option<(f64, f64)>| match fars {
                None => (p - m) / (2.0 * h),
                Some((pp, mm)) => (8.0 * (p - m) - (pp - mm)) / (12.0 * h),
            };
            g[k] = diff(plus.f, minus.f, far.as_ref().map(|(a, b)| (a.f, b.f)));
            for i in 0..me {
                je[(i, k)] = diff(plus.ce[i], minus.ce[i], far.as_ref().map(|(a, b)| (a.ce[i], b.ce[i])));
            }
            for i in 0..mi {
                ji[(i, k)] = diff(plus.ci[i], minus.ci[i], far.as_ref().map(|(a, b)| (a.ci[i], b.ci[i])));
            }
        }
        Some(Derivatives { g, je, ji })
    }
}

impl Scaled<'_, '_> {
    /// Lagrangian value; with `objective == false` only the constraint part.
    fn lagrangian(&self, y: &[f64], eq: &[f64], ineq: &[f64], objective: bool) -> Option<f64> {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        if objective {
            let v = self.values(y)?;
            return Some(v.f + dot(&v.ce, eq) + dot(&v.ci, ineq));
        }
        let x = self.full(y);
        let ce: Vec<f64> = self.p.equalities(&x).iter().zip(&self.eq_scale).map(|(c, s)| c * s).collect();
        let ci: Vec<f64> = self.p.inequalities(&x).iter().zip(&self.ineq_scale).map(|(c, s)| c * s).collect();
        let l = dot(&ce, eq) + dot(&ci, ineq);
        l.is_finite().then_some(l)
    }

    /// `2 J' J` for the scaled least-squares residuals.
    fn gauss_newton(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        let weight = self.f_scale.sqrt();
        let residuals = |w: &[f64]| {
            let r = self.p.residuals(&self.full(w));
            r.iter().all(|v| v.is_finite()).then_some(r)
        };
        let mut jac = DMatrix::zeros(self.p.residual_count(), y.len());
        let mut w = y.to_vec();
        for k in 0..y.len() {
            let h = FIFTH_ROOT_EPS * (1.0 + y[k].abs());
            let mut at = |v: f64| {
                w[k] = v;
                let r = residuals(&w);
                w[k] = y[k];
                r
            };
            let (p1, m1, p2, m2) = (at(y[k] + h)?, at(y[k] - h)?, at(y[k] + 2.0 * h)?, at(y[k] - 2.0 * h)?);
            for i in 0..p1.len() {
                jac[(i, k)] = weight * (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h);
            }
        }
        Some(jac.tr_mul(&jac) * 2.0)
    }

    /// Second central differences of the Lagrangian with the given multipliers.
    fn lagrangian_hessian(
        &self,
        y: &[f64],
        eq: &[f64],
        ineq: &[f64],
        objective: bool,
    ) -> Option<DMatrix<f64>> {
        let n = y.len();
        let steps: Vec<f64> = y.iter().map(|v| FOURTH_ROOT_EPS * (1.0 + v.abs())).collect();
        let mut w = y.to_vec();
        let l = |w: &[f64]| self.lagrangian(w, eq, ineq, objective);
        let l0 = l(&w)?;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let hi = steps[i];
            w[i] = y[i] + hi;
            let lp = l(&w)?;
            w[i] = y[i] - hi;
            let lm = l(&w)?;
            h[(i, i)] = (lp - 2.0 * l0 + lm) / (hi * hi);
            for j in 0..i {
                let hj = steps[j];
                let mut corner = |si: f64, sj: f64| {
                    w[i] = y[i] + si * hi;
                    w[j] = y[j] + sj * hj;
                    l(&w)
                };
                let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                    + corner(-1.0, -1.0)?)
                    / (4.0 * hi * hj);
                w[j] = y[j];
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
            w[i] = y[i];
        }
        Some(h)
    }
}

/// Fourth root of machine epsilon, the balanced step for second differences.
const FOURTH_ROOT_EPS: f64 = 1.220_703_125e-4;

/// Fifth root of machine epsilon, the balanced step for fourth-order differences.
const FIFTH_ROOT_EPS: f64 = 7.400_959_797_414_05e-4;

/// Relative merit change below which function differences are roundoff.
const ROUNDOFF_MERIT: f64 = 1e-13;

/// Reflect negative eigenvalues and lift small ones so the matrix is safely
/// positive definite.
fn make_positive_definite(h: DMatrix<f64>, relative_floor: f64) -> Option<DMatrix<f64>> {
    let eig = h.symmetric_eigen();
    let largest = eig.eigenvalues.amax();
    if !largest.is_finite() {
        return None;
    }
    let floor = relative_floor * largest.max(1.0);
    let lam = eig.eigenvalues.map(|v| v.abs().max(floor));
    let q = &eig.eigenvectors;
    let m = q * DMatrix::from_diagonal(&lam) * q.transpose();
    Some((&m + m.transpose()) * 0.5)
}

struct Step {
    d: Vec<f64>,
    /// Fraction of the linearized constraints that had to be relaxed.
    relax: f64,
    eq: Vec<f64>,
    ineq: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn qp_step(
    b: &DMatrix<f64>,
    der: &Derivatives,
    ce: &[f64],
    ci: &[f64],
    lower: &[f64],
    upper: &[f64],
    relax_weight: f64,
) -> Result<Step, QpError> {
    let ji_neg = -&der.ji;
    let ci_neg: Vec<f64> = ci.iter().map(|c| -c).collect();
    let plain = solve_qp(&QpProblem {
        hessian: b,
        gradient: der.g.as_slice(),
        eq_matrix: &der.je,
        eq_offset: ce,
        ineq_matrix: &ji_neg,
        ineq_offset: &ci_neg,
        lower,
        upper,
    });
    match plain {
        Ok(s) => Ok(step_from(s, 0.0, b.nrows())),
        Err(QpError::Infeasible) | Err(QpError::DependentEqualities) => {
            relaxed_step(b, der, ce, ci, lower, upper, relax_weight)
        }
        Err(e) => Err(e),
    }
}

fn step_from(s: QpSolution, relax: f64, n: usize) -> Step {
    let mut d = s.x;
    d.truncate(n);
    let mut lower = s.lower_multipliers;
    let mut upper = s.upper_multipliers;
    lower.truncate(n);
    upper.truncate(n);
    Step {
        d,
        relax,
        // QP rows are c + J d = 0 and -(c + J d) >= 0; Lagrangian sign is f + l'c
        eq: s.eq_multipliers.iter().map(|v| -v).collect(),
        ineq: s.ineq_multipliers,
        lower,
        upper,
    }
}

/// Linearization with constraints scaled by `(1 - relax)`, `relax in [0, 1]`,
/// penalized linearly so the smallest workable relaxation is chosen.
fn relaxed_step(
    b: &DMatrix<f64>,
    der: &Derivatives,
    ce: &[f64],
    ci: &[f64],
    lower: &[f64],
    upper: &[f64],
    relax_weight: f64,
) -> Result<Step, QpError> {
    let n = b.nrows();
    let (me, mi) = (ce.len(), ci.len());
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(b);
    h[(n, n)] = 1.0;
    let mut g = der.g.as_slice().to_vec();
    g.push(relax_weight);
    let mut ae = DMatrix::zeros(me, n + 1);
    ae.view_mut((0, 0), (me, n)).copy_from(&der.je);
    for i in 0..me {
        ae[(i, n)] = -ce[i];
    }
    let mut ai = DMatrix::zeros(mi, n + 1);
    ai.view_mut((0, 0), (mi, n)).copy_from(&(-&der.ji));
    for i in 0..mi {
        if ci[i] > 0.0 {
            ai[(i, n)] = ci[i];
        }
    }
    let bi: Vec<f64> = ci.iter().map(|c| -c).collect();
    let mut lo = lower.to_vec();
    lo.push(0.0);
    let mut hi = upper.to_vec();
    hi.push(1.0);
    let s = solve_qp(&QpProblem {
        hessian: &h,
        gradient: &g,
        eq_matrix: &ae,
        eq_offset: ce,
        ineq_matrix: &ai,
        ineq_offset: &bi,
        lower: &lo,
        upper: &hi,
    })?;
    let relax = s.x[n].clamp(0.0, 1.0);
    Ok(step_from(s, relax, n))
}

fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: bool) {
    let sy = s.dot(y);
    if first && sy > 0.0 {
        let scale = y.dot(y) / sy;
        if scale.is_finite() && scale > 0.0 {
            b.fill_with_identity();
            *b *= scale;
        }
    }
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) || !sbs.is_finite() {
        return;
    }
    let r = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if !(sr > 0.0) {
        return;
    }
    b.ger(-1.0 / sbs, &bs, &bs, 1.0);
    b.ger(1.0 / sr, &r, &r, 1.0);
    let bt = b.transpose();
    *b += bt;
    *b *= 0.5;
}

fn lagrangian_gradient(der: &Derivatives, step: &Step) -> DVector<f64> {
    let mut grad = der.g.clone();
    if !step.eq.is_empty() {
        grad.gemv_tr(1.0, &der.je, &DVector::from_column_slice(&step.eq), 1.0);
    }
    if !step.ineq.is_empty() {
        grad.gemv_tr(1.0, &der.ji, &DVector::from_column_slice(&step.ineq), 1.0);
    }
    grad
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Solve `problem` from its initial point, or from `warm` when given.
pub fn solve(
    problem: &NlpProblem<'_>,
    options: &NlpOptions,
    warm: Option<&WarmStart>,
) -> NlpResult {
    let dim = problem.dim();
    let mut x0 = match warm {
        Some(w) if w.point.len() == dim => w.point.clone(),
        _ => problem.initial().to_vec(),
    };
    clip(&mut x0, problem.lower(), problem.upper());

    let free: Vec<usize> = (0..dim)
        .filter(|&j| problem.lower()[j] < problem.upper()[j])
        .collect();
    let var_scale: Vec<f64> = free.iter().map(|&j| problem.variable_scales()[j]).collect();

    let failure = |x: Vec<f64>, message: String, iterations: usize, merit: Vec<(f64, f64)>| {
        let objective = problem.objective(&x);
        let (eq, ineq) = problem.violations(&x);
        NlpResult {
            objective,
            max_equality_violation: eq,
            max_inequality_violation: ineq,
            stationarity: f64::INFINITY,
            status: NlpStatus::LineSearchFailure,
            iterations,
            equality_multipliers: vec![0.0; problem.equality_count()],
            inequality_multipliers: vec![0.0; problem.inequality_count()],
            merit_history: merit,
            message,
            solution: x,
        }
    };

    let f0 = problem.objective(&x0);
    let ce0 = problem.equalities(&x0);
    let ci0 = problem.inequalities(&x0);
    if !f0.is_finite() || !ce0.iter().chain(&ci0).all(|v| v.is_finite()) {
        return failure(
            x0,
            "non-finite function value at the initial point".into(),
            0,
            vec![],
        );
    }
    let row_scale = |v: &f64| 1.0 / v.abs().max(1.0);
    let scaled = Scaled {
        p: problem,
        lower: free
            .iter()
            .zip(&var_scale)
            .map(|(&j, s)| problem.lower()[j] / s)
            .collect(),
        upper: free
            .iter()
            .zip(&var_scale)
            .map(|(&j, s)| problem.upper()[j] / s)
            .collect(),
        free: free.clone(),
        var_scale: var_scale.clone(),
        base: x0.clone(),
        f_scale: row_scale(&f0),
        eq_scale: ce0.iter().map(row_scale).collect(),
        ineq_scale: ci0.iter().map(row_scale).collect(),
    };
    let nf = free.len();
    let mut y: Vec<f64> = free
        .iter()
        .zip(&var_scale)
        .map(|(&j, s)| x0[j] / s)
        .collect();

    let mut penalty = 1.0_f64;
    if let Some(w) = warm {
        for (m, s) in w
            .equality_multipliers
            .iter()
            .flatten()
            .zip(&scaled.eq_scale)
        {
            penalty = penalty.max(1.5 * (m * scaled.f_scale / s).abs());
        }
        for (m, s) in w
            .inequality_multipliers
            .iter()
            .flatten()
            .zip(&scaled.ineq_scale)
        {
            penalty = penalty.max(1.5 * (m * scaled.f_scale / s).abs());
        }
    }

    let Some(mut values) = scaled.values(&y) else {
        return failure(
            x0,
            "non-finite function value at the initial point".into(),
            0,
            vec![],
        );
    };
    let mut b = DMatrix::<f64>::identity(nf, nf);
    let mut first_update = true;
    let mut previous: Option<(Vec<f64>, Derivatives)> = None;
    let mut last_step: Option<Step> = None;
    let mut merit_history = Vec::new();
    let mut stationarity = f64::INFINITY;
    let mut status = NlpStatus::MaxIterations;
    let mut message = String::new();
    let mut iterations = 0;

    for iter in 0..=options.max_iterations {
        iterations = iter;
        let Some(der) = scaled.derivatives(&y, options.fd_relative_step, options.difference_order) else {
            status = NlpStatus::LineSearchFailure;
            message = "non-finite value in finite differences".into();
            break;
        };

        if options.hessian == HessianApproximation::FiniteDifference {
            let (eq, ineq) = last_step.as_ref().map_or_else(
                || (vec![0.0; scaled.eq_scale.len()], vec![0.0; scaled.ineq_scale.len()]),
                |s| (s.eq.clone(), s.ineq.clone()),
            );
            let least_squares = problem.residual_count() > 0;
            let hessian = scaled.lagrangian_hessian(&y, &eq, &ineq, !least_squares).and_then(|h| {
                if least_squares {
                    scaled.gauss_newton(&y).map(|g| g + h)
                } else {
                    Some(h)
                }
            });
            // Gauss-Newton curvature is semidefinite already and needs less lift
            let floor = if least_squares { 1e-10 } else { 1e-8 };
            if let Some(h) = hessian.and_then(|h| make_positive_definite(h, floor))
            {
                b = h;
                previous = None;
            }
        }
        if let (Some((y_old, der_old)), Some(step)) = (previous.take(), last_step.as_ref()) {
            let s = DVector::from_iterator(nf, y.iter().zip(&y_old).map(|(a, b)| a - b));
            let yv = lagrangian_gradient(&der, step) - lagrangian_gradient(&der_old, step);
            damped_bfgs(&mut b, &s, &yv, first_update);
            first_update = false;
        }

        let lo: Vec<f64> = scaled.lower.iter().zip(&y).map(|(l, v)| l - v).collect();
        let hi: Vec<f64> = scaled.upper.iter().zip(&y).map(|(u, v)| u - v).collect();
        let relax_weight = (100.0 * penalty).max(1e4);
        let step = match qp_step(&b, &der, &values.ce, &values.ci, &lo, &hi, relax_weight) {
            Ok(s) => s,
            Err(QpError::NotPositiveDefinite) => {
                b.fill_with_identity();
                first_update = true;
                match qp_step(&b, &der, &values.ce, &values.ci, &lo, &hi, relax_weight) {
                    Ok(s) => s,
                    Err(e) => {
                        status = NlpStatus::LineSearchFailure;
                        message = format!("QP subproblem failed: {e}");
                        break;
                    }
                }
            }
            Err(e) => {
                status = NlpStatus::LineSearchFailure;
                message = format!("QP subproblem failed: {e}");
                break;
            }
        };

        // KKT residual at y with the QP multipliers
        let mut grad_l = lagrangian_gradient(&der, &step);
        for k in 0..nf {
            grad_l[k] += step.upper[k] - step.lower[k];
        }
        stationarity = grad_l.amax();
        let mut complementarity = 0.0_f64;
        for (m, c) in step.ineq.iter().zip(&values.ci) {
            complementarity = complementarity.max((m * c).abs());
        }
        for k in 0..nf {
            if scaled.lower[k].is_finite() {
                complementarity = complementarity.max(step.lower[k] * (y[k] - scaled.lower[k]));
            }
            if scaled.upper[k].is_finite() {
                complementarity = complementarity.max(step.upper[k] * (scaled.upper[k] - y[k]));
            }
        }
        let x = scaled.full(&y);
        let (eq_viol, ineq_viol) = problem.violations(&x);
        if options.verbose {
            eprintln!(
                "sqp {iter:4} f={:+.10e} viol={:.3e} stat={:.3e} compl={:.3e} |d|={:.3e} relax={:.1e} mu={:.2e}",
                values.f,
                eq_viol.max(ineq_viol),
                stationarity,
                complementarity,
                inf_norm(&step.d),
                step.relax,
                penalty
            );
        }
        let tol = options.kkt_tolerance;
        if stationarity <= tol
            && eq_viol.max(ineq_viol) <= tol
            && complementarity <= tol
            && step.relax == 0.0
        {
            status = NlpStatus::Converged;
            last_step = Some(step);
            break;
        }
        if iter == options.max_iterations {
            last_step = Some(step);
            break;
        }

        let lambda_max = inf_norm(&step.eq).max(inf_norm(&step.ineq));
        penalty = penalty.max(1.5 * lambda_max + 1e-6);

        let phi0 = values.merit(penalty);
        let slope = der
            .g
            .as_slice()
            .iter()
            .zip(&step.d)
            .map(|(g, d)| g * d)
            .sum::<f64>()
            - penalty * (1.0 - step.relax) * values.infeasibility();
        let merit_roundoff = ROUNDOFF_MERIT * phi0.abs().max(1.0);
        if !(slope < merit_roundoff) {
            status = NlpStatus::LineSearchFailure;
            message = format!("no descent direction (directional derivative {slope:e})");
            last_step = Some(step);
            break;
        }

        let trial_point = |d: &[f64], alpha: f64| -> Vec<f64> {
            let mut t: Vec<f64> = y.iter().zip(d).map(|(v, dv)| v + alpha * dv).collect();
            clip(&mut t, &scaled.lower, &scaled.upper);
            t
        };

        let mut alpha = 1.0;
        let mut accepted: Option<(Vec<f64>, Values)> = None;
        let mut tried_correction = false;
        while alpha >= options.min_step {
            let yt = trial_point(&step.d, alpha);
            let vt = scaled.values(&yt);
            let phi_t = vt.as_ref().map_or(f64::INFINITY, |v| v.merit(penalty));
            // below roundoff the Armijo test cannot be resolved; plain decrease suffices
            let unresolved = -alpha * slope <= merit_roundoff;
            let armijo = phi_t <= phi0 + options.armijo * alpha * slope;
            if phi_t <= phi0 && (armijo || unresolved) {
                accepted = Some((yt, vt.unwrap()));
                break;
            }
            if alpha == 1.0 && !tried_correction && (!values.ce.is_empty() || !values.ci.is_empty())
            {
                tried_correction = true;
                if let Some(vt) = vt.as_ref() {
                    if let Some(corr) =
                        second_order_correction(&b, &der, &step, vt, &lo, &hi, relax_weight)
                    {
                        let yc = trial_point(&corr, 1.0);
                        if let Some(vc) = scaled.values(&yc) {
                            if vc.merit(penalty) <= phi0 + options.armijo * slope {
                                accepted = Some((yc, vc));
                                break;
                            }
                        }
                    }
                }
            }
            let next = if phi_t.is_finite() {
                let denom = 2.0 * (phi_t - phi0 - alpha * slope);
                if denom > 0.0 {
                    -slope * alpha * alpha / denom
                } else {
                    0.5 * alpha
                }
            } else {
                0.1 * alpha
            };
            alpha = next.clamp(0.1 * alpha, 0.5 * alpha);
        }

        let Some((y_new, v_new)) = accepted else {
            status = NlpStatus::LineSearchFailure;
            message = format!("line search failed to reduce the l1 merit (slope {slope:e})");
            last_step = Some(step);
            break;
        };
        merit_history.push((phi0, v_new.merit(penalty)));
        previous = Some((std::mem::replace(&mut y, y_new), der));
        values = v_new;
        last_step = Some(step);
    }

    let x = scaled.full(&y);
    let objective = problem.objective(&x);
    let (eq_viol, ineq_viol) = problem.violations(&x);
    let (eq_mult, ineq_mult) = match &last_step {
        Some(s) => (
            s.eq.iter()
                .zip(&scaled.eq_scale)
                .map(|(m, r)| m * r / scaled.f_scale)
                .collect(),
            s.ineq
                .iter()
                .zip(&scaled.ineq_scale)
                .map(|(m, r)| m * r / scaled.f_scale)
                .collect(),
        ),
        None => (
            vec![0.0; problem.equality_count()],
            vec![0.0; problem.inequality_count()],
        ),
    };
    if message.is_empty() {
        message = match status {
            NlpStatus::Converged => "converged".into(),
            NlpStatus::MaxIterations => "iteration limit reached".into(),
            NlpStatus::LineSearchFailure => "line search failure".into(),
        };
    }
    NlpResult {
        solution: x,
        objective,
        max_equality_violation: eq_viol,
        max_inequality_violation: ineq_viol,
        stationarity,
        status,
        iterations,
        equality_multipliers: eq_mult,
        inequality_multipliers: ineq_mult,
        merit_history,
        message,
    }
}

/// Re-solve the QP with constraint values taken at the trial point, which
/// corrects the curvature of the constraints along the step.
fn second_order_correction(
    b: &DMatrix<f64>,
    der: &Derivatives,
    step: &Step,
    trial: &Values,
    lo: &[f64],
    hi: &[f64],
    relax_weight: f64,
) -> Option<Vec<f64>> {
    let d = DVector::from_column_slice(&step.d);
    let jd_e = &der.je * &d;
    let jd_i = &der.ji * &d;
    let ce: Vec<f64> = trial
        .ce
        .iter()
        .zip(jd_e.iter())
        .map(|(c, j)| c - j)
        .collect();
    let ci: Vec<f64> = trial
        .ci
        .iter()
        .zip(jd_i.iter())
        .map(|(c, j)| c - j)
        .collect();
    let s = qp_step(b, der, &ce, &ci, lo, hi, relax_weight).ok()?;
    (s.relax == 0.0).then_some(s.d)
}
