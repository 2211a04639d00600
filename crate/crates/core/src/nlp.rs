//! The finite-dimensional problem interface consumed by the solver.
//!
//! Equality-constrained, bound-constrained NLP:
//!
//! ```text
//! minimize f(z)   subject to  c(z) = 0,  lower <= z <= upper
//! ```
//!
//! The constraint Jacobian is exposed in triplet form against a fixed,
//! precomputed sparsity pattern. All evaluation methods are pure and
//! reentrant; concurrent evaluation at distinct points is safe.

/// An equality- and bound-constrained nonlinear program.
pub trait NlpProblem: Sync {
    fn n_vars(&self) -> usize;

    fn n_eq(&self) -> usize;

    /// Per-variable lower bounds (`-inf` where free).
    fn lower(&self) -> &[f64];

    /// Per-variable upper bounds (`+inf` where free).
    fn upper(&self) -> &[f64];

    fn objective(&self, z: &[f64]) -> f64;

    fn objective_gradient_into(&self, z: &[f64], grad: &mut [f64]);

    /// Equality-constraint residuals; feasible iff all zero.
    fn constraints_into(&self, z: &[f64], out: &mut [f64]);

    /// `(row, col)` coordinates of the structural Jacobian nonzeros. The
    /// pattern is constant across evaluations.
    fn jacobian_pattern(&self) -> &[(usize, usize)];

    /// Values aligned with [`NlpProblem::jacobian_pattern`].
    fn jacobian_values_into(&self, z: &[f64], vals: &mut [f64]);
}

/// Accumulate `out += Jᵀ·w` from triplets.
pub fn jt_mul_acc(pattern: &[(usize, usize)], vals: &[f64], w: &[f64], out: &mut [f64]) {
    debug_assert_eq!(pattern.len(), vals.len());
    for (&(r, c), &v) in pattern.iter().zip(vals) {
        out[c] += v * w[r];
    }
}

/// Accumulate `out += J·v` from triplets.
pub fn j_mul_acc(pattern: &[(usize, usize)], vals: &[f64], v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(pattern.len(), vals.len());
    for (&(r, c), &val) in pattern.iter().zip(vals) {
        out[r] += val * v[c];
    }
}

/// Clamp `z` into the box `[lower, upper]` in place.
pub fn project(z: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((zi, &l), &u) in z.iter_mut().zip(lower).zip(upper) {
        *zi = zi.max(l).min(u);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_products() {
        // J = [[1, 2, 0], [0, 0, 3]]
        let pattern = [(0, 0), (0, 1), (1, 2)];
        let vals = [1.0, 2.0, 3.0];
        let mut jtv = vec![0.0; 3];
        jt_mul_acc(&pattern, &vals, &[1.0, 1.0], &mut jtv);
        assert_eq!(jtv, vec![1.0, 2.0, 3.0]);
        let mut jv = vec![0.0; 2];
        j_mul_acc(&pattern, &vals, &[1.0, 1.0, 1.0], &mut jv);
        assert_eq!(jv, vec![3.0, 3.0]);
    }

    #[test]
    fn projection_respects_equal_bounds() {
        let mut z = vec![5.0, -3.0, 0.7];
        project(
            &mut z,
            &[1.0, 0.0, f64::NEG_INFINITY],
            &[1.0, f64::INFINITY, f64::INFINITY],
        );
        assert_eq!(z, vec![1.0, 0.0, 0.7]);
    }
}
