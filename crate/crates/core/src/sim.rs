//! Validation by simulation: integrate the true dynamics under the
//! represented input and compare with the represented state.
//!
//! Integration uses the Dormand-Prince 5(4) pair with the usual error
//! control. Steps are cut at every output time, so the input polynomial is
//! never evaluated across an interval boundary within one step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::OcpDefinition;
use crate::trajectory::RepresentedTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Upper step bound; `None` means the smallest mesh interval over 100.
    pub max_step: Option<f64>,
    /// Take steps of exactly this size (cut at output times) without error control.
    pub fixed_step: Option<f64>,
    /// Output points per mesh interval.
    pub samples_per_interval: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            max_step: None,
            fixed_step: None,
            samples_per_interval: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// `max_t |x~_q - x_sim_q|` per state.
    pub max_deviation: Vec<f64>,
    /// Trapezoid integral of `|x~ - x_sim|_2` over the output grid.
    pub integrated_deviation: f64,
    /// Total variation of each represented input on the output grid.
    pub input_total_variation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// Simulated state at each output time.
    pub states: Vec<Vec<f64>>,
    pub discrepancy: Discrepancy,
    pub steps: usize,
    pub rejections: usize,
    /// False when integration stopped early; `times` then ends at the last good point.
    pub complete: bool,
    pub message: String,
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    ocp: &'a OcpDefinition,
    traj: &'a RepresentedTrajectory,
    /// Interval whose input polynomial drives the current step.
    interval: usize,
    u: Vec<f64>,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Stepper<'_> {
    fn rhs(&mut self, t: f64, x: &[f64], out: usize) -> bool {
        let times = self.traj.interval_times();
        let k = self.interval;
        let s = (t - times[k]) / (times[k + 1] - times[k]);
        self.traj.input_in(k, s, &mut self.u);
        let mut dx = std::mem::take(&mut self.k[out]);
        self.ocp
            .functions()
            .dynamics(x, &self.u, t, self.traj.params(), &mut dx);
        let ok = dx.iter().all(|v| v.is_finite());
        self.k[out] = dx;
        ok
    }

    /// One step from `(t, x)`; returns the fifth-order solution and the
    /// embedded error estimate, or `None` on a non-finite evaluation.
    fn step(&mut self, t: f64, x: &[f64], h: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = x.len();
        if !self.rhs(t, x, 0) {
            return None;
        }
        for stage in 1..7 {
            for q in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[stage].iter().enumerate().take(stage) {
                    acc += a * self.k[j][q];
                }
                self.tmp[q] = x[q] + h * acc;
            }
            let y = std::mem::take(&mut self.tmp);
            let ok = self.rhs(t + C[stage] * h, &y, stage);
            self.tmp = y;
            if !ok {
                return None;
            }
        }
        let mut x5 = vec![0.0; n];
        let mut err = vec![0.0; n];
        for q in 0..n {
            let (mut s5, mut s4) = (0.0, 0.0);
            for j in 0..7 {
                s5 += B5[j] * self.k[j][q];
                s4 += B4[j] * self.k[j][q];
            }
            x5[q] = x[q] + h * s5;
            err[q] = h * (s5 - s4);
        }
        Some((x5, err))
    }
}

/// Output grid: `samples` uniform subdivisions of every mesh interval.
fn output_grid(traj: &RepresentedTrajectory, samples: usize) -> Vec<(usize, f64)> {
    let times = traj.interval_times();
    let samples = samples.max(1);
    let mut grid = vec![(0, times[0])];
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        for j in 1..samples {
            grid.push((k, times[k] + h * j as f64 / samples as f64));
        }
        grid.push((k, times[k + 1]));
    }
    grid
}

/// Integrate `x' = f(x, u~(t), t, p)` from `x0` at the trajectory's start.
pub fn simulate(
    ocp: &OcpDefinition,
    traj: &RepresentedTrajectory,
    x0: &[f64],
    options: &SimOptions,
) -> Result<SimResult> {
    crate::error::check_len("initial state", traj.states(), x0.len())?;
    if !(options.atol > 0.0 && options.rtol > 0.0) {
        return Err(Error::Options("simulation tolerances must be positive".into()));
    }
    let times = traj.interval_times();
    let smallest = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let max_step = options.max_step.unwrap_or(smallest / 100.0);
    if !(max_step > 0.0) || options.fixed_step.is_some_and(|h| !(h > 0.0)) {
        return Err(Error::Options("simulation step must be positive".into()));
    }
    let n = traj.states();
    let mut stepper = Stepper {
        ocp,
        traj,
        interval: 0,
        u: vec![0.0; traj.inputs()],
        k: vec![vec![0.0; n]; 7],
        tmp: vec![0.0; n],
    };
    let grid = output_grid(traj, options.samples_per_interval);
    let mut out_t = vec![grid[0].1];
    let mut out_x = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    let mut t = grid[0].1;
    let mut h = options.fixed_step.unwrap_or(max_step).min(max_step);
    let (mut steps, mut rejections) = (0, 0);
    let mut message = String::new();

    'outer: for &(k, target) in &grid[1..] {
        stepper.interval = k;
        while t < target {
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let dt = if last { remaining } else { h };
            let Some((xn, err)) = stepper.step(t, &x, dt) else {
                message = format!("non-finite dynamics at t = {t}");
                break 'outer;
            };
            if options.fixed_step.is_some() {
                steps += 1;
                x = xn;
                t = if last { target } else { t + dt };
                continue;
            }
            let norm = (err
                .iter()
                .zip(x.iter().zip(&xn))
                .map(|(e, (a, b))| {
                    let sc = options.atol + options.rtol * a.abs().max(b.abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / n.max(1) as f64)
                .sqrt();
            if norm <= 1.0 {
                steps += 1;
                x = xn;
                t = if last { target } else { t + dt };
                let grow = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                // a step shortened to hit the output time says nothing about h
                if !last || grow < 1.0 {
                    h = (dt * grow).min(max_step);
                }
            } else {
                rejections += 1;
                h = dt * (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    message = format!("step size underflow at t = {t}");
                    break 'outer;
                }
            }
        }
        out_t.push(target);
        out_x.push(x.clone());
    }
    let complete = message.is_empty();
    let discrepancy = deviation(traj, &out_t, &out_x)?;
    Ok(SimResult {
        times: out_t,
        states: out_x,
        discrepancy,
        steps,
        rejections,
        complete,
        message: if complete { "completed".into() } else { message },
    })
}

fn deviation(traj: &RepresentedTrajectory, times: &[f64], states: &[Vec<f64>]) -> Result<Discrepancy> {
    let n = traj.states();
    let mut max_deviation = vec![0.0_f64; n];
    let mut norms = Vec::with_capacity(times.len());
    for (t, xs) in times.iter().zip(states) {
        let xr = traj.eval_state(*t)?;
        let mut sq = 0.0;
        for q in 0..n {
            let d = (xr[q] - xs[q]).abs();
            max_deviation[q] = max_deviation[q].max(d);
            sq += d * d;
        }
        norms.push(sq.sqrt());
    }
    let integrated_deviation = times
        .windows(2)
        .zip(norms.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0] + e[1]))
        .sum();
    let mut input_total_variation = vec![0.0; traj.inputs()];
    let mut prev: Option<Vec<f64>> = None;
    for t in times {
        let u = traj.eval_input(*t)?;
        if let Some(p) = &prev {
            for (tv, (a, b)) in input_total_variation.iter_mut().zip(u.iter().zip(p)) {
                *tv += (a - b).abs();
            }
        }
        prev = Some(u);
    }
    Ok(Discrepancy {
        max_deviation,
        integrated_deviation,
        input_total_variation,
    })
}

/// Deviation of `traj` from a simulation of it and the input total variation.
pub fn discrepancy(traj: &RepresentedTrajectory, sim: &SimResult) -> Result<Discrepancy> {
    deviation(traj, &sim.times, &sim.states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{DecisionData, Mesh, Scheme};
    use crate::test_problems::{constant_rate, exponential, integrator};
    use crate::trajectory::ClosureMode;

    fn traj(ocp: &OcpDefinition, k: usize, states: Vec<f64>, inputs: Vec<f64>) -> RepresentedTrajectory {
        let mesh = Mesh::uniform(k, Scheme::HermiteSimpson).unwrap();
        let z = DecisionData {
            n: 1,
            m: 1,
            states,
            inputs,
            params: vec![],
            t0: 0.0,
            tf: 1.0,
        };
        RepresentedTrajectory::reconstruct(&z, &mesh, ocp, ClosureMode::ContinuityClosed).unwrap()
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let ocp = integrator();
        let tr = traj(&ocp, 2, vec![1.0; 5], vec![0.0; 5]);
        let sim = simulate(&ocp, &tr, &[1.0], &SimOptions::default()).unwrap();
        assert!(sim.complete);
        assert!(sim.states.iter().all(|x| x[0] == 1.0));
        assert_eq!(sim.discrepancy.max_deviation, vec![0.0]);
        assert_eq!(sim.discrepancy.input_total_variation, vec![0.0]);
        assert_eq!(sim.times.len(), 201);
        assert_eq!(*sim.times.last().unwrap(), 1.0);
    }

    #[test]
    fn exponential_growth() {
        let ocp = exponential();
        let tr = traj(&ocp, 1, vec![1.0, 1.5, 2.7], vec![0.0; 3]);
        let sim = simulate(&ocp, &tr, &[1.0], &SimOptions::default()).unwrap();
        let end = sim.states.last().unwrap()[0];
        assert!((end - std::f64::consts::E).abs() < 1e-8, "{end}");
        assert!(sim.steps >= 100);
    }

    #[test]
    fn representable_trajectory_has_no_deviation() {
        let ocp = constant_rate();
        let tr = traj(&ocp, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.0; 5]);
        let sim = simulate(&ocp, &tr, &[0.0], &SimOptions::default()).unwrap();
        assert!(sim.discrepancy.max_deviation[0] <= 1e-8);
        assert!(sim.discrepancy.integrated_deviation <= 1e-8);
    }

    #[test]
    fn input_total_variation_counts_swings() {
        let ocp = integrator();
        let tr = traj(&ocp, 1, vec![0.0; 3], vec![0.0, 1.0, 0.0]);
        let sim = simulate(&ocp, &tr, &[0.0], &SimOptions::default()).unwrap();
        assert!((sim.discrepancy.input_total_variation[0] - 2.0).abs() < 1e-12);
        let again = discrepancy(&tr, &sim).unwrap();
        assert_eq!(again, sim.discrepancy);
    }

    #[test]
    fn fixed_steps_converge_at_fifth_order() {
        let ocp = exponential();
        let tr = traj(&ocp, 1, vec![1.0, 1.5, 2.7], vec![0.0; 3]);
        let err = |h: f64| {
            let o = SimOptions {
                fixed_step: Some(h),
                max_step: Some(1.0),
                samples_per_interval: 1,
                ..SimOptions::default()
            };
            let sim = simulate(&ocp, &tr, &[1.0], &o).unwrap();
            (sim.states.last().unwrap()[0] - std::f64::consts::E).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order > 4.5, "{order}");
    }

    #[test]
    fn blow_up_returns_partial_trajectory() {
        use crate::test_problems::{scalar, Scalar};
        // x' = x^2 from 2 escapes at t = 0.5
        let ocp = scalar(
            Scalar {
                f: |x, _, _| x * x,
                l: |_, _| 0.0,
                mayer_tf: 0.0,
                x0: None,
            },
            1.0,
        );
        let tr = traj(&ocp, 1, vec![2.0, 3.0, 4.0], vec![0.0; 3]);
        let sim = simulate(&ocp, &tr, &[2.0], &SimOptions::default()).unwrap();
        assert!(!sim.complete);
        assert!(*sim.times.last().unwrap() <= 0.5, "{}", sim.message);
        assert_eq!(sim.times.len(), sim.states.len());
    }

    #[test]
    fn bad_options_are_rejected() {
        let ocp = exponential();
        let tr = traj(&ocp, 1, vec![1.0, 1.5, 2.7], vec![0.0; 3]);
        let bad = SimOptions {
            atol: 0.0,
            ..SimOptions::default()
        };
        assert!(simulate(&ocp, &tr, &[1.0], &bad).is_err());
        assert!(simulate(&ocp, &tr, &[1.0, 2.0], &SimOptions::default()).is_err());
    }
}
