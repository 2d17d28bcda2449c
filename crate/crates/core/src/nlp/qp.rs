//! Strictly convex dense QP by the dual active-set method of Goldfarb and Idnani.
//!
//! Solves
//!
//! ```text
//! min 1/2 x'Gx + g'x   s.t.  A_e x + b_e = 0,  A_i x + b_i >= 0,  lower <= x <= upper
//! ```
//!
//! with `G` positive definite. Multipliers satisfy
//! `Gx + g = A_e'y_e + A_i'y_i + y_lower - y_upper` with `y_i, y_lower, y_upper >= 0`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QpError {
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("equality constraints are linearly dependent")]
    DependentEqualities,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("iteration limit reached")]
    IterationLimit,
}

pub struct QpProblem<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub gradient: &'a [f64],
    pub eq_matrix: &'a DMatrix<f64>,
    pub eq_offset: &'a [f64],
    pub ineq_matrix: &'a DMatrix<f64>,
    pub ineq_offset: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub lower_multipliers: Vec<f64>,
    pub upper_multipliers: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
enum Con {
    Eq(usize),
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

struct Constraints<'a> {
    p: &'a QpProblem<'a>,
    /// Inequality-type constraints in selection order.
    list: Vec<Con>,
}

impl Constraints<'_> {
    fn slack(&self, c: Con, x: &DVector<f64>) -> f64 {
        match c {
            Con::Eq(i) => self.p.eq_matrix.row(i).dot(&x.transpose()) + self.p.eq_offset[i],
            Con::Ineq(i) => self.p.ineq_matrix.row(i).dot(&x.transpose()) + self.p.ineq_offset[i],
            Con::Lower(j) => x[j] - self.p.lower[j],
            Con::Upper(j) => self.p.upper[j] - x[j],
        }
    }

    /// `normal . z`
    fn dot_normal(&self, c: Con, z: &DVector<f64>) -> f64 {
        match c {
            Con::Eq(i) => self.p.eq_matrix.row(i).dot(&z.transpose()),
            Con::Ineq(i) => self.p.ineq_matrix.row(i).dot(&z.transpose()),
            Con::Lower(j) => z[j],
            Con::Upper(j) => -z[j],
        }
    }

    /// `d = J' normal`
    fn compute_d(&self, c: Con, j: &DMatrix<f64>, d: &mut DVector<f64>) {
        match c {
            Con::Eq(i) => d.gemv_tr(1.0, j, &self.p.eq_matrix.row(i).transpose(), 0.0),
            Con::Ineq(i) => d.gemv_tr(1.0, j, &self.p.ineq_matrix.row(i).transpose(), 0.0),
            Con::Lower(r) => d.copy_from(&j.row(r).transpose()),
            Con::Upper(r) => {
                d.copy_from(&j.row(r).transpose());
                d.neg_mut();
            }
        }
    }
}

struct Factor {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    r_norm: f64,
}

impl Factor {
    fn update_z(&self, d: &DVector<f64>, iq: usize, z: &mut DVector<f64>) {
        z.fill(0.0);
        for col in iq..self.n {
            z.axpy(d[col], &self.j.column(col), 1.0);
        }
    }

    fn update_r(&self, d: &DVector<f64>, iq: usize, r: &mut [f64]) {
        for i in (0..iq).rev() {
            let mut sum = 0.0;
            for k in i + 1..iq {
                sum += self.r[(i, k)] * r[k];
            }
            r[i] = (d[i] - sum) / self.r[(i, i)];
        }
    }

    fn add_constraint(&mut self, d: &mut DVector<f64>, iq: &mut usize) -> bool {
        let n = self.n;
        for jj in ((*iq + 1)..n).rev() {
            let mut cc = d[jj - 1];
            let mut ss = d[jj];
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            d[jj] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[jj - 1] = -h;
            } else {
                d[jj - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = self.j[(k, jj - 1)];
                let t2 = self.j[(k, jj)];
                let a = t1 * cc + t2 * ss;
                self.j[(k, jj - 1)] = a;
                self.j[(k, jj)] = xny * (t1 + a) - t2;
            }
        }
        *iq += 1;
        for i in 0..*iq {
            self.r[(i, *iq - 1)] = d[i];
        }
        let diag = d[*iq - 1].abs();
        if diag <= f64::EPSILON * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(diag);
        true
    }

    /// Remove active constraint at position `qq` of the active list.
    fn delete_constraint(
        &mut self,
        active: &mut [usize],
        u: &mut [f64],
        iq: &mut usize,
        qq: usize,
    ) {
        let n = self.n;
        for i in qq..*iq - 1 {
            active[i] = active[i + 1];
            u[i] = u[i + 1];
            for row in 0..n {
                self.r[(row, i)] = self.r[(row, i + 1)];
            }
        }
        active[*iq - 1] = active[*iq];
        u[*iq - 1] = u[*iq];
        active[*iq] = 0;
        u[*iq] = 0.0;
        for row in 0..*iq {
            self.r[(row, *iq - 1)] = 0.0;
        }
        *iq -= 1;
        if *iq == 0 {
            return;
        }
        for jj in qq..*iq {
            let mut cc = self.r[(jj, jj)];
            let mut ss = self.r[(jj + 1, jj)];
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(jj + 1, jj)] = 0.0;
            if cc < 0.0 {
                self.r[(jj, jj)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(jj, jj)] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in jj + 1..*iq {
                let t1 = self.r[(jj, k)];
                let t2 = self.r[(jj + 1, k)];
                let a = t1 * cc + t2 * ss;
                self.r[(jj, k)] = a;
                self.r[(jj + 1, k)] = xny * (t1 + a) - t2;
            }
            for k in 0..n {
                let t1 = self.j[(k, jj)];
                let t2 = self.j[(k, jj + 1)];
                let a = t1 * cc + t2 * ss;
                self.j[(k, jj)] = a;
                self.j[(k, jj + 1)] = xny * (a + t1) - t2;
            }
        }
    }
}

enum Outcome {
    Done {
        x: DVector<f64>,
        f: f64,
        active: Vec<usize>,
        u: Vec<f64>,
    },
    /// Inequality `idx` was numerically dependent; retry without it.
    Exclude(usize),
}

pub fn solve_qp(p: &QpProblem<'_>) -> Result<QpSolution, QpError> {
    let n = p.gradient.len();
    assert_eq!(p.hessian.nrows(), n);
    assert_eq!(p.eq_matrix.nrows(), p.eq_offset.len());
    assert_eq!(p.ineq_matrix.nrows(), p.ineq_offset.len());
    let me = p.eq_offset.len();
    let mi_general = p.ineq_offset.len();

    let mut list: Vec<Con> = (0..mi_general).map(Con::Ineq).collect();
    for j in 0..n {
        if p.lower[j].is_finite() {
            list.push(Con::Lower(j));
        }
        if p.upper[j].is_finite() {
            list.push(Con::Upper(j));
        }
    }
    let cons = Constraints { p, list };

    let chol = p
        .hessian
        .clone()
        .cholesky()
        .ok_or(QpError::NotPositiveDefinite)?;
    let lt = chol.l().transpose();
    let j0 = lt
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;
    let g = DVector::from_column_slice(p.gradient);
    let x_free = -chol.solve(&g);

    let mut allowed = vec![true; cons.list.len()];
    let max_restarts = cons.list.len() + 1;
    for _ in 0..=max_restarts {
        match run(&cons, me, n, &j0, &g, &x_free, &allowed)? {
            Outcome::Exclude(idx) => allowed[idx] = false,
            Outcome::Done { x, f, active, u } => {
                // excluded rows must still hold
                for (idx, c) in cons.list.iter().enumerate() {
                    if !allowed[idx] && cons.slack(*c, &x) < -1e3 * feasibility_tolerance(&cons, &x) {
                        return Err(QpError::Infeasible);
                    }
                }
                let mut sol = QpSolution {
                    x: x.as_slice().to_vec(),
                    objective: f,
                    eq_multipliers: vec![0.0; me],
                    ineq_multipliers: vec![0.0; mi_general],
                    lower_multipliers: vec![0.0; n],
                    upper_multipliers: vec![0.0; n],
                };
                for (id, mult) in active.iter().zip(&u) {
                    match constraint_of(&cons, me, *id) {
                        Con::Eq(i) => sol.eq_multipliers[i] = *mult,
                        Con::Ineq(i) => sol.ineq_multipliers[i] = *mult,
                        Con::Lower(j) => sol.lower_multipliers[j] = *mult,
                        Con::Upper(j) => sol.upper_multipliers[j] = *mult,
                    }
                }
                return Ok(sol);
            }
        }
    }
    Err(QpError::IterationLimit)
}

/// Violation below which a constraint counts as satisfied.
fn feasibility_tolerance(cons: &Constraints<'_>, x: &DVector<f64>) -> f64 {
    let offsets = cons
        .p
        .ineq_offset
        .iter()
        .chain(cons.p.eq_offset)
        .fold(0.0_f64, |a, b| a.max(b.abs()));
    1e-12 * (1.0 + x.amax() + offsets)
}

/// Active ids: `0..me` are equalities, `me + k` is `cons.list[k]`.
fn constraint_of(cons: &Constraints<'_>, me: usize, id: usize) -> Con {
    if id < me {
        Con::Eq(id)
    } else {
        cons.list[id - me]
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    cons: &Constraints<'_>,
    me: usize,
    n: usize,
    j0: &DMatrix<f64>,
    g: &DVector<f64>,
    x_free: &DVector<f64>,
    allowed: &[bool],
) -> Result<Outcome, QpError> {
    let mi = cons.list.len();
    let mut fac = Factor {
        n,
        j: j0.clone(),
        r: DMatrix::zeros(n, n),
        r_norm: 1.0,
    };
    let mut x = x_free.clone();
    let mut f = 0.5 * g.dot(&x);
    let mut active = vec![0usize; n + 1];
    let mut u = vec![0.0; n + 1];
    let mut rvec = vec![0.0; n + 1];
    let mut d = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut iq = 0usize;

    for i in 0..me {
        let c = Con::Eq(i);
        cons.compute_d(c, &fac.j, &mut d);
        fac.update_z(&d, iq, &mut z);
        fac.update_r(&d, iq, &mut rvec);
        let zn = cons.dot_normal(c, &z);
        let t2 = if z.norm_squared() > f64::EPSILON {
            -cons.slack(c, &x) / zn
        } else {
            0.0
        };
        x.axpy(t2, &z, 1.0);
        u[iq] = t2;
        for k in 0..iq {
            u[k] -= t2 * rvec[k];
        }
        f += 0.5 * t2 * t2 * zn;
        active[iq] = i;
        if !fac.add_constraint(&mut d, &mut iq) {
            return Err(QpError::DependentEqualities);
        }
    }

    let mut inactive = vec![true; mi];
    let mut slack = vec![0.0; mi];
    let limit = 50 * (n + mi + 10);
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > limit {
            return Err(QpError::IterationLimit);
        }
        for (k, c) in cons.list.iter().enumerate() {
            slack[k] = cons.slack(*c, &x);
        }
        let tol = feasibility_tolerance(cons, &x);

        let mut ss = -tol;
        let mut ip = None;
        for k in 0..mi {
            if slack[k] < ss && inactive[k] && allowed[k] {
                ss = slack[k];
                ip = Some(k);
            }
        }
        let Some(ip) = ip else { break };
        let c_new = cons.list[ip];
        u[iq] = 0.0;
        active[iq] = me + ip;
        let mut s_ip = slack[ip];

        loop {
            iterations += 1;
            if iterations > limit {
                return Err(QpError::IterationLimit);
            }
            cons.compute_d(c_new, &fac.j, &mut d);
            fac.update_z(&d, iq, &mut z);
            fac.update_r(&d, iq, &mut rvec);

            let mut t1 = f64::INFINITY;
            let mut drop_pos = None;
            for k in me..iq {
                if rvec[k] > 0.0 {
                    let ratio = u[k] / rvec[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_pos = Some(k);
                    }
                }
            }
            let zn = cons.dot_normal(c_new, &z);
            let t2 = if z.norm_squared() > f64::EPSILON && zn.abs() > 0.0 {
                -s_ip / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }

            if !t2.is_finite() {
                // dual step only
                for k in 0..iq {
                    u[k] -= t * rvec[k];
                }
                u[iq] += t;
                let pos = drop_pos.expect("finite partial step has a blocking constraint");
                inactive[active[pos] - me] = true;
                fac.delete_constraint(&mut active, &mut u, &mut iq, pos);
                continue;
            }

            x.axpy(t, &z, 1.0);
            f += t * zn * (0.5 * t + u[iq]);
            for k in 0..iq {
                u[k] -= t * rvec[k];
            }
            u[iq] += t;

            if t == t2 {
                if !fac.add_constraint(&mut d, &mut iq) {
                    return Ok(Outcome::Exclude(ip));
                }
                inactive[ip] = false;
                break;
            }

            let pos = drop_pos.expect("partial step has a blocking constraint");
            inactive[active[pos] - me] = true;
            fac.delete_constraint(&mut active, &mut u, &mut iq, pos);
            s_ip = cons.slack(c_new, &x);
        }
    }

    active.truncate(iq);
    u.truncate(iq);
    Ok(Outcome::Done { x, f, active, u })
}
