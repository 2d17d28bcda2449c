use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Cube root of machine epsilon, the balanced step for central differences.
pub const CBRT_EPS: f64 = 6.055_454_452_393_343e-6;

/// Central-difference step for a variable of value `v`.
pub fn fd_step(v: f64) -> f64 {
    CBRT_EPS * (1.0 + v.abs())
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, v: &[f64]) -> Result<Vec<f64>> {
    let mut work = v.to_vec();
    let mut grad = vec![0.0; v.len()];
    for i in 0..v.len() {
        let (lo, hi) = perturbations(v[i], CBRT_EPS);
        work[i] = hi;
        let fp = f(&work);
        work[i] = lo;
        let fm = f(&work);
        work[i] = v[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        grad[i] = (fp - fm) / (hi - lo);
    }
    Ok(grad)
}

/// Jacobian of `f: R^n -> R^rows`, one row per output.
pub fn fd_jacobian(f: impl Fn(&[f64], &mut [f64]), rows: usize, v: &[f64]) -> Result<DMatrix<f64>> {
    let mut work = v.to_vec();
    let mut jac = DMatrix::zeros(rows, v.len());
    let mut fp = vec![0.0; rows];
    let mut fm = vec![0.0; rows];
    for j in 0..v.len() {
        let (lo, hi) = perturbations(v[j], CBRT_EPS);
        work[j] = hi;
        f(&work, &mut fp);
        work[j] = lo;
        f(&work, &mut fm);
        work[j] = v[j];
        let inv = 1.0 / (hi - lo);
        for i in 0..rows {
            if !fp[i].is_finite() || !fm[i].is_finite() {
                return Err(Error::NonFinite("jacobian"));
            }
            jac[(i, j)] = (fp[i] - fm[i]) * inv;
        }
    }
    Ok(jac)
}

/// `(v - h, v + h)` with `h` rounded so both points are exactly representable offsets.
pub(crate) fn perturbations(v: f64, rel: f64) -> (f64, f64) {
    let h = rel * (1.0 + v.abs());
    let hi = v + h;
    let lo = v - (hi - v);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let g = fd_gradient(|v| v[0] * v[0], &[3.0]).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = fd_gradient(|_| 4.2, &[1.0, -2.0, 1e3]).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn jacobian_of_linear_map() {
        let j = fd_jacobian(
            |v, out| {
                out[0] = 2.0 * v[0] - v[1];
                out[1] = v[1] * 3.0;
            },
            2,
            &[0.3, -0.7],
        )
        .unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((j[(0, 1)] + 1.0).abs() < 1e-9);
        assert!(j[(1, 0)].abs() < 1e-12);
        assert!((j[(1, 1)] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(fd_gradient(|v| 1.0 / v[0].max(0.0) - 1e300 * 1e300, &[0.0]).is_err());
        assert!(fd_jacobian(|_, out| out[0] = f64::NAN, 1, &[1.0]).is_err());
    }
}
