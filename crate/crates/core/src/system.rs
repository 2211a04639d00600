//! Controlled-ODE abstraction shared by the integrator, transcription and
//! shooting solver.
//!
//! A [`ControlledSystem`] is a time-varying right-hand side `f(t, x, u)`
//! together with its analytic Jacobians. By convention the *last* state
//! component is the accumulated running cost (Mayer augmentation), so the
//! objective of every downstream problem is the final value of that
//! component.

/// Structural nonzero positions of the right-hand-side Jacobians.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JacobianStructure {
    /// `(i, j)` pairs with `∂f_i/∂x_j` structurally nonzero, sorted row-major.
    pub wrt_state: Vec<(usize, usize)>,
    /// `(i, j)` pairs with `∂f_i/∂u_j` structurally nonzero, sorted row-major.
    pub wrt_control: Vec<(usize, usize)>,
}

/// A controlled ODE `ẋ = f(t, x, u)` with analytic derivatives.
pub trait ControlledSystem: Sync {
    fn n_states(&self) -> usize;

    fn n_controls(&self) -> usize;

    /// Evaluate `f(t, x, u)` into `dx` (length `n_states`).
    fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);

    /// Evaluate `∂f/∂x` (row-major `n_states × n_states`) and `∂f/∂u`
    /// (row-major `n_states × n_controls`).
    fn rhs_jacobian(&self, t: f64, x: &[f64], u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]);

    /// Structural nonzeros of the Jacobians.
    ///
    /// The default probes the analytic Jacobian at three fixed generic
    /// points and keeps every entry that is nonzero at any of them.
    /// Implementations with known structure may override.
    fn jacobian_structure(&self) -> JacobianStructure {
        let nx = self.n_states();
        let nu = self.n_controls();
        let mut seen_x = vec![false; nx * nx];
        let mut seen_u = vec![false; nx * nu];
        let mut jac_x = vec![0.0; nx * nx];
        let mut jac_u = vec![0.0; nx * nu];
        // Generic probe points: nonzero, pairwise distinct, away from the
        // axes so entries like 2*c*u do not vanish by coincidence.
        for (p, &t) in [0.37_f64, 11.3, 29.71].iter().enumerate() {
            let x: Vec<f64> = (0..nx)
                .map(|k| 0.23 + 0.149 * k as f64 + 0.31 * p as f64)
                .collect();
            let u: Vec<f64> = (0..nu)
                .map(|j| 0.17 + 0.53 * j as f64 + 0.29 * p as f64)
                .collect();
            self.rhs_jacobian(t, &x, &u, &mut jac_x, &mut jac_u);
            for (slot, &v) in seen_x.iter_mut().zip(jac_x.iter()) {
                *slot |= v != 0.0;
            }
            for (slot, &v) in seen_u.iter_mut().zip(jac_u.iter()) {
                *slot |= v != 0.0;
            }
        }
        let collect = |seen: &[bool], cols: usize| {
            seen.iter()
                .enumerate()
                .filter(|(_, &s)| s)
                .map(|(idx, _)| (idx / cols, idx % cols))
                .collect::<Vec<_>>()
        };
        JacobianStructure {
            wrt_state: collect(&seen_x, nx),
            wrt_control: collect(&seen_u, nu),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ẋ0 = u0, ẋ1 = u0² — the scalar integrator test system.
    struct Accumulator;

    impl ControlledSystem for Accumulator {
        fn n_states(&self) -> usize {
            2
        }
        fn n_controls(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, _x: &[f64], u: &[f64], dx: &mut [f64]) {
            dx[0] = u[0];
            dx[1] = u[0] * u[0];
        }
        fn rhs_jacobian(
            &self,
            _t: f64,
            _x: &[f64],
            u: &[f64],
            jac_x: &mut [f64],
            jac_u: &mut [f64],
        ) {
            jac_x.fill(0.0);
            jac_u[0] = 1.0;
            jac_u[1] = 2.0 * u[0];
        }
    }

    #[test]
    fn probed_structure_finds_control_entries_only() {
        let s = Accumulator.jacobian_structure();
        assert!(s.wrt_state.is_empty());
        assert_eq!(s.wrt_control, vec![(0, 0), (1, 0)]);
    }
}
