//! Central finite differences.
//!
//! Used as the independent derivative oracle throughout the verification
//! suite and tests: these routines only ever call the value functions they
//! are handed, never the analytic derivative paths they are checking.

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let x0 = x[j];
        xp[j] = x0 + step;
        let fp = f(&xp);
        xp[j] = x0 - step;
        let fm = f(&xp);
        xp[j] = x0;
        g[j] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Central-difference Jacobian (dense, row-major `n_out × n_in`) of a
/// vector function written through an `into`-style closure.
pub fn jacobian<F>(f: F, n_out: usize, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n_in = x.len();
    let mut jac = vec![0.0; n_out * n_in];
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n_out];
    let mut fm = vec![0.0; n_out];
    for j in 0..n_in {
        let x0 = x[j];
        xp[j] = x0 + step;
        f(&xp, &mut fp);
        xp[j] = x0 - step;
        f(&xp, &mut fm);
        xp[j] = x0;
        for i in 0..n_out {
            jac[i * n_in + j] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Relative error with a unit floor in the denominator, the right scale for
/// this crate's O(1)-normalized quantities: exact zeros compare absolutely.
pub fn scaled_rel_err(reference: f64, value: f64) -> f64 {
    (reference - value).abs() / reference.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gradient_of_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = gradient(f, &[2.0, 1.0], 1e-6);
        assert_relative_eq!(g[0], 7.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 6.0, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_of_pair() {
        let f = |x: &[f64], out: &mut [f64]| {
            out[0] = x[0] * x[1];
            out[1] = x[1] * x[1];
        };
        let j = jacobian(f, 2, &[3.0, 4.0], 1e-6);
        assert_relative_eq!(j[0], 4.0, epsilon = 1e-8);
        assert_relative_eq!(j[1], 3.0, epsilon = 1e-8);
        assert_relative_eq!(j[2], 0.0, epsilon = 1e-8);
        assert_relative_eq!(j[3], 8.0, epsilon = 1e-8);
    }
}
