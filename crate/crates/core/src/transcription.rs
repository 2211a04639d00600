//! Direct transcription: the continuous control problem becomes a sparse
//! equality-constrained NLP.
//!
//! Decision vector layout (frozen; Jacobian pattern tests depend on it):
//! all node states first, node-major (`state(i, k) -> i·nx + k` for
//! `i = 0..=N`), then all interval controls (`control(i, j) ->
//! nx·(N+1) + i·nu + j` for `i = 0..N`). Equality constraints are the Euler
//! defects in node-major, state-minor order:
//!
//! ```text
//! defect(i, k) = x_k(i+1) - x_k(i) - h·f_k(t_i, x(i), u(i))
//! ```
//!
//! so a decision vector has zero defects exactly when it encodes an Euler
//! trajectory. The objective reads a single variable: the accumulated-cost
//! state at the final node. Initial (and optionally terminal) states are
//! imposed through equal lower/upper bounds, not extra constraints, which
//! keeps the equality count at `nx·N`.

use serde::Serialize;
use thiserror::Error;

use crate::integrator::{ControlSchedule, TimeGrid, Trajectory};
use crate::nlp::NlpProblem;
use crate::system::ControlledSystem;
use crate::util;

#[derive(Debug, Error)]
pub enum TranscriptionError {
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Bounds applied to every control interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum ControlBounds {
    /// `u >= 0`: investments cannot be negative.
    #[default]
    NonNegative,
    /// No bounds.
    Free,
    /// Explicit per-control bounds, replicated across intervals.
    Custom { lower: Vec<f64>, upper: Vec<f64> },
}

/// Options for [`transcribe`].
#[derive(Debug, Clone, Default)]
pub struct TranscribeOptions {
    pub control_bounds: ControlBounds,
    /// Per-state terminal value fixed via equal bounds (`None` = free).
    /// Empty means all free.
    pub terminal_state: Vec<Option<f64>>,
}

/// Bijection between `(node, state)` / `(interval, control)` pairs and flat
/// decision-vector indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexMap {
    pub n_states: usize,
    pub n_controls: usize,
    pub n_steps: usize,
}

impl IndexMap {
    pub fn state(&self, node: usize, k: usize) -> usize {
        debug_assert!(node <= self.n_steps && k < self.n_states);
        node * self.n_states + k
    }

    pub fn control(&self, interval: usize, j: usize) -> usize {
        debug_assert!(interval < self.n_steps && j < self.n_controls);
        self.n_states * (self.n_steps + 1) + interval * self.n_controls + j
    }

    pub fn defect(&self, interval: usize, k: usize) -> usize {
        interval * self.n_states + k
    }

    pub fn n_vars(&self) -> usize {
        self.n_states * (self.n_steps + 1) + self.n_controls * self.n_steps
    }

    pub fn n_eq(&self) -> usize {
        self.n_states * self.n_steps
    }
}

/// Structural template of one defect row: which state/control columns of
/// the owning node appear, with the unit entry on `x_k(i+1)` implied.
#[derive(Debug, Clone)]
struct RowTemplate {
    /// `(k', diagonal)` state columns at node `i`, ascending.
    x_cols: Vec<(usize, bool)>,
    /// Control columns at interval `i`, ascending.
    u_cols: Vec<usize>,
}

/// The transcribed NLP. Implements [`NlpProblem`].
#[derive(Debug, Clone)]
pub struct TranscribedProblem<S> {
    system: S,
    grid: TimeGrid,
    initial: Vec<f64>,
    index: IndexMap,
    lower: Vec<f64>,
    upper: Vec<f64>,
    pattern: Vec<(usize, usize)>,
    rows: Vec<RowTemplate>,
    nnz_per_node: usize,
}

/// Build the NLP for `system` on `grid` from `initial`.
pub fn transcribe<S: ControlledSystem>(
    system: S,
    grid: TimeGrid,
    initial: &[f64],
    options: &TranscribeOptions,
) -> Result<TranscribedProblem<S>, TranscriptionError> {
    let nx = system.n_states();
    let nu = system.n_controls();
    if initial.len() != nx {
        return Err(TranscriptionError::Dimension {
            what: "initial state",
            expected: nx,
            got: initial.len(),
        });
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(TranscriptionError::Config("non-finite initial state".into()));
    }
    if initial[nx - 1] != 0.0 {
        return Err(TranscriptionError::Config(
            "accumulated-cost component of the initial state must be zero".into(),
        ));
    }
    if !options.terminal_state.is_empty() && options.terminal_state.len() != nx {
        return Err(TranscriptionError::Dimension {
            what: "terminal state fixes",
            expected: nx,
            got: options.terminal_state.len(),
        });
    }

    let index = IndexMap {
        n_states: nx,
        n_controls: nu,
        n_steps: grid.n_steps(),
    };

    // Bounds: everything free, then pin down what the options dictate.
    let mut lower = vec![f64::NEG_INFINITY; index.n_vars()];
    let mut upper = vec![f64::INFINITY; index.n_vars()];
    for (k, &v) in initial.iter().enumerate() {
        lower[index.state(0, k)] = v;
        upper[index.state(0, k)] = v;
    }
    for (k, fix) in options.terminal_state.iter().enumerate() {
        if let Some(v) = fix {
            lower[index.state(grid.n_steps(), k)] = *v;
            upper[index.state(grid.n_steps(), k)] = *v;
        }
    }
    match &options.control_bounds {
        ControlBounds::NonNegative => {
            for i in 0..grid.n_steps() {
                for j in 0..nu {
                    lower[index.control(i, j)] = 0.0;
                }
            }
        }
        ControlBounds::Free => {}
        ControlBounds::Custom { lower: lo, upper: hi } => {
            if lo.len() != nu || hi.len() != nu {
                return Err(TranscriptionError::Dimension {
                    what: "custom control bounds",
                    expected: nu,
                    got: lo.len().max(hi.len()),
                });
            }
            for i in 0..grid.n_steps() {
                for j in 0..nu {
                    lower[index.control(i, j)] = lo[j];
                    upper[index.control(i, j)] = hi[j];
                }
            }
        }
    }

    // Row templates from the structural Jacobian: the diagonal column is
    // always present (the -x_k(i) term), the rest comes from ∂f.
    let structure = system.jacobian_structure();
    let mut rows = Vec::with_capacity(nx);
    for k in 0..nx {
        let mut x_cols: Vec<usize> = structure
            .wrt_state
            .iter()
            .filter(|&&(r, _)| r == k)
            .map(|&(_, c)| c)
            .collect();
        if !x_cols.contains(&k) {
            x_cols.push(k);
        }
        x_cols.sort_unstable();
        let u_cols: Vec<usize> = structure
            .wrt_control
            .iter()
            .filter(|&&(r, _)| r == k)
            .map(|&(_, c)| c)
            .collect();
        rows.push(RowTemplate {
            x_cols: x_cols.into_iter().map(|c| (c, c == k)).collect(),
            u_cols,
        });
    }
    let nnz_per_node: usize = rows
        .iter()
        .map(|r| r.x_cols.len() + 1 + r.u_cols.len())
        .sum();

    let mut pattern = Vec::with_capacity(nnz_per_node * grid.n_steps());
    for i in 0..grid.n_steps() {
        for (k, row) in rows.iter().enumerate() {
            let r = index.defect(i, k);
            for &(c, _) in &row.x_cols {
                pattern.push((r, index.state(i, c)));
            }
            pattern.push((r, index.state(i + 1, k)));
            for &j in &row.u_cols {
                pattern.push((r, index.control(i, j)));
            }
        }
    }

    Ok(TranscribedProblem {
        system,
        grid,
        initial: initial.to_vec(),
        index,
        lower,
        upper,
        pattern,
        rows,
        nnz_per_node,
    })
}

impl<S: ControlledSystem> TranscribedProblem<S> {
    pub fn system(&self) -> &S {
        &self.system
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn index_map(&self) -> &IndexMap {
        &self.index
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn node_defects(&self, i: usize, z: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let nx = self.index.n_states;
        let x = &z[self.index.state(i, 0)..=self.index.state(i, nx - 1)];
        let u_start = self.index.control(i, 0);
        let u = &z[u_start..u_start + self.index.n_controls];
        self.system.rhs(self.grid.node_time(i), x, u, scratch);
        let h = self.grid.h();
        for k in 0..nx {
            out[k] = z[self.index.state(i + 1, k)] - x[k] - h * scratch[k];
        }
    }

    /// Defect residuals, sequential reference path (kept callable so the
    /// benches can compare it against the parallel dispatch).
    pub fn evaluate_defects_seq_into(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.index.n_vars(), "decision vector length");
        assert_eq!(out.len(), self.index.n_eq(), "residual vector length");
        let nx = self.index.n_states;
        let mut scratch = vec![0.0; nx];
        for (i, chunk) in out.chunks_mut(nx).enumerate() {
            self.node_defects(i, z, chunk, &mut scratch);
        }
    }

    /// Defect residuals; per-node work parallelized under the `parallel`
    /// feature, bit-identical to the sequential path.
    pub fn evaluate_defects_into(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.index.n_vars(), "decision vector length");
        assert_eq!(out.len(), self.index.n_eq(), "residual vector length");
        let nx = self.index.n_states;
        util::for_each_chunk_indexed(out, nx, |i, chunk| {
            let mut scratch = vec![0.0; nx];
            self.node_defects(i, z, chunk, &mut scratch);
        });
    }

    /// Convenience allocating wrapper.
    pub fn evaluate_defects(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.index.n_eq()];
        self.evaluate_defects_into(z, &mut out);
        out
    }

    fn node_jacobian_values(&self, i: usize, z: &[f64], vals: &mut [f64], jx: &mut [f64], ju: &mut [f64]) {
        let nx = self.index.n_states;
        let nu = self.index.n_controls;
        let x = &z[self.index.state(i, 0)..=self.index.state(i, nx - 1)];
        let u_start = self.index.control(i, 0);
        let u = &z[u_start..u_start + nu];
        self.system
            .rhs_jacobian(self.grid.node_time(i), x, u, jx, ju);
        let h = self.grid.h();
        let mut slot = 0;
        for (k, row) in self.rows.iter().enumerate() {
            for &(c, diagonal) in &row.x_cols {
                let mut v = -h * jx[k * nx + c];
                if diagonal {
                    v -= 1.0;
                }
                vals[slot] = v;
                slot += 1;
            }
            vals[slot] = 1.0;
            slot += 1;
            for &j in &row.u_cols {
                vals[slot] = -h * ju[k * nu + j];
                slot += 1;
            }
        }
        debug_assert_eq!(slot, self.nnz_per_node);
    }

    /// Jacobian values, sequential reference path.
    pub fn jacobian_values_seq_into(&self, z: &[f64], vals: &mut [f64]) {
        assert_eq!(vals.len(), self.pattern.len(), "triplet value length");
        let nx = self.index.n_states;
        let nu = self.index.n_controls;
        let mut jx = vec![0.0; nx * nx];
        let mut ju = vec![0.0; nx * nu];
        for (i, chunk) in vals.chunks_mut(self.nnz_per_node).enumerate() {
            self.node_jacobian_values(i, z, chunk, &mut jx, &mut ju);
        }
    }

    /// Jacobian values aligned with the pattern; parallel per node.
    pub fn jacobian_values_par_into(&self, z: &[f64], vals: &mut [f64]) {
        assert_eq!(vals.len(), self.pattern.len(), "triplet value length");
        let nx = self.index.n_states;
        let nu = self.index.n_controls;
        util::for_each_chunk_indexed(vals, self.nnz_per_node, |i, chunk| {
            let mut jx = vec![0.0; nx * nx];
            let mut ju = vec![0.0; nx * nu];
            self.node_jacobian_values(i, z, chunk, &mut jx, &mut ju);
        });
    }

    /// Flatten a trajectory into a decision vector.
    pub fn pack_trajectory(&self, traj: &Trajectory) -> Result<Vec<f64>, TranscriptionError> {
        let nx = self.index.n_states;
        let nu = self.index.n_controls;
        if traj.n_states() != nx {
            return Err(TranscriptionError::Dimension {
                what: "trajectory states",
                expected: nx,
                got: traj.n_states(),
            });
        }
        if traj.grid().n_steps() != self.index.n_steps {
            return Err(TranscriptionError::Dimension {
                what: "trajectory steps",
                expected: self.index.n_steps,
                got: traj.grid().n_steps(),
            });
        }
        let mut z = vec![0.0; self.index.n_vars()];
        z[..nx * (self.index.n_steps + 1)].copy_from_slice(traj.states_flat());
        z[nx * (self.index.n_steps + 1)..].copy_from_slice(traj.controls().as_flat());
        debug_assert_eq!(traj.controls().n_controls(), nu);
        Ok(z)
    }

    /// Un-flatten a decision vector. Returns the trajectory together with
    /// its worst defect; an infeasible `z` is reported, not rejected.
    pub fn extract_trajectory(&self, z: &[f64]) -> Result<Extracted, TranscriptionError> {
        if z.len() != self.index.n_vars() {
            return Err(TranscriptionError::Dimension {
                what: "decision vector",
                expected: self.index.n_vars(),
                got: z.len(),
            });
        }
        let nx = self.index.n_states;
        let states = z[..nx * (self.index.n_steps + 1)].to_vec();
        let controls = z[nx * (self.index.n_steps + 1)..].to_vec();
        let schedule = ControlSchedule::from_rows(self.grid, self.index.n_controls, controls)
            .map_err(|e| TranscriptionError::Config(e.to_string()))?;
        let trajectory = Trajectory::new(self.grid, nx, states, schedule)
            .map_err(|e| TranscriptionError::Config(e.to_string()))?;
        let max_defect = crate::util::inf_norm(&self.evaluate_defects(z));
        if max_defect > 1e-6 {
            log::warn!("extracted trajectory is infeasible: max defect {max_defect:.3e}");
        }
        Ok(Extracted {
            trajectory,
            max_defect,
        })
    }

    /// Dimension report with structural linear/nonlinear counts.
    ///
    /// A constraint counts as nonlinear when any of its Jacobian entries
    /// varies between probe points (nonzero Hessian); a variable counts as
    /// nonlinear when any entry of its Jacobian column varies. The linear
    /// objective contributes nothing to either count.
    pub fn report(&self) -> TranscriptionReport {
        let n_vars = self.index.n_vars();
        let nnz = self.pattern.len();
        let mut vals = vec![vec![0.0; nnz]; 3];
        for (p, v) in vals.iter_mut().enumerate() {
            let z: Vec<f64> = (0..n_vars)
                .map(|i| 0.1 + mix_to_unit(i as u64, p as u64))
                .collect();
            self.jacobian_values_seq_into(&z, v);
        }
        let mut row_nonlinear = vec![false; self.index.n_eq()];
        let mut col_nonlinear = vec![false; n_vars];
        for (slot, &(r, c)) in self.pattern.iter().enumerate() {
            let varies =
                vals[0][slot] != vals[1][slot] || vals[0][slot] != vals[2][slot];
            if varies {
                row_nonlinear[r] = true;
                col_nonlinear[c] = true;
            }
        }
        TranscriptionReport {
            n_vars,
            n_eq: self.index.n_eq(),
            nonlinear_vars: col_nonlinear.iter().filter(|&&b| b).count(),
            nonlinear_constraints: row_nonlinear.iter().filter(|&&b| b).count(),
            h: self.grid.h(),
            n_steps: self.grid.n_steps(),
            t_final: self.grid.t_final(),
        }
    }

    /// JSON description of the problem plus defect residuals at `z`, for
    /// cross-checking against external modeling tools.
    pub fn dump_json(&self, z: &[f64]) -> Result<serde_json::Value, TranscriptionError> {
        if z.len() != self.index.n_vars() {
            return Err(TranscriptionError::Dimension {
                what: "decision vector",
                expected: self.index.n_vars(),
                got: z.len(),
            });
        }
        let defects = self.evaluate_defects(z);
        Ok(serde_json::json!({
            "n_vars": self.index.n_vars(),
            "n_eq": self.index.n_eq(),
            "index_map": {
                "n_states": self.index.n_states,
                "n_controls": self.index.n_controls,
                "n_steps": self.index.n_steps,
                "layout": "node-major states, then interval-major controls",
                "constraint_order": "node-major, state-minor",
            },
            "lower": self.lower,
            "upper": self.upper,
            "defects": defects,
        }))
    }
}

/// Trajectory recovered from a decision vector.
#[derive(Debug, Clone)]
pub struct Extracted {
    pub trajectory: Trajectory,
    pub max_defect: f64,
}

/// Dimension and nonlinearity report for a transcribed problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptionReport {
    pub n_vars: usize,
    pub n_eq: usize,
    pub nonlinear_vars: usize,
    pub nonlinear_constraints: usize,
    pub h: f64,
    pub n_steps: usize,
    pub t_final: f64,
}

/// SplitMix64-style hash of `(i, salt)` mapped into [0, 1): deterministic
/// probe coordinates with no RNG dependency.
fn mix_to_unit(i: u64, salt: u64) -> f64 {
    let mut x = i
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(0x94d0_49bb_1331_11eb);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::euler_simulate;
    use crate::model::{DengueModel, ParameterSet, State};
    use crate::util::inf_norm;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dengue_problem(h: f64, t_final: f64) -> TranscribedProblem<DengueModel> {
        let mut params = ParameterSet::default();
        params.t_final = t_final;
        let model = DengueModel::new(params).unwrap();
        let grid = TimeGrid::from_step(h, t_final).unwrap();
        transcribe(
            model,
            grid,
            &State::initial(1.0, 0.12, 0.004, 0.05).to_array(),
            &TranscribeOptions::default(),
        )
        .unwrap()
    }

    fn packed_zero_control(problem: &TranscribedProblem<DengueModel>) -> Vec<f64> {
        let schedule = ControlSchedule::zeros(*problem.grid(), 2);
        let traj = euler_simulate(problem.system(), problem.initial(), &schedule).unwrap();
        problem.pack_trajectory(&traj).unwrap()
    }

    /// Deterministic pseudo-random in-bounds decision vector.
    fn probe_vector(problem: &TranscribedProblem<DengueModel>, salt: u64) -> Vec<f64> {
        let n = problem.n_vars();
        let mut z: Vec<f64> = (0..n).map(|i| 0.05 + mix_to_unit(i as u64, salt)).collect();
        crate::nlp::project(&mut z, problem.lower(), problem.upper());
        z
    }

    #[test]
    fn reference_grid_dimensions() {
        let problem = dengue_problem(0.25, 52.0);
        assert_eq!(problem.n_vars(), 1461);
        assert_eq!(problem.n_eq(), 1040);
        let tiny = dengue_problem(1.0, 1.0);
        assert_eq!(tiny.n_vars(), 12);
        assert_eq!(tiny.n_eq(), 5);
    }

    #[test]
    fn nonlinearity_counts() {
        let report = dengue_problem(0.25, 52.0).report();
        // Every state and control at nodes 0..N-1 enters some bilinear or
        // squared term except x5, which only chains linearly.
        assert_eq!(report.nonlinear_vars, 1248);
        assert_eq!(report.nonlinear_constraints, 832);
        // Within 6 of the externally presolved 1455/1039 and 1243/828.
        assert!(report.n_vars.abs_diff(1455) <= 6);
        assert!(report.n_eq.abs_diff(1039) <= 6);
        assert!(report.nonlinear_vars.abs_diff(1243) <= 6);
        assert!(report.nonlinear_constraints.abs_diff(828) <= 6);
    }

    #[test]
    fn packed_trajectory_has_zero_defects() {
        let problem = dengue_problem(0.25, 52.0);
        let z = packed_zero_control(&problem);
        assert!(inf_norm(&problem.evaluate_defects(&z)) <= 1e-12);
    }

    #[test]
    fn objective_reads_final_cost_state() {
        let problem = dengue_problem(0.25, 13.0);
        let z = packed_zero_control(&problem);
        let index = problem.index_map();
        assert_eq!(
            problem.objective(&z),
            z[index.state(index.n_steps, 4)]
        );
        let mut grad = vec![0.0; problem.n_vars()];
        problem.objective_gradient_into(&z, &mut grad);
        let nonzeros: Vec<usize> = grad
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzeros, vec![index.state(index.n_steps, 4)]);
        assert_eq!(grad[nonzeros[0]], 1.0);
    }

    #[test]
    fn initial_state_is_bound_fixed_and_controls_nonnegative() {
        let problem = dengue_problem(0.25, 13.0);
        let index = problem.index_map();
        for k in 0..5 {
            assert_eq!(problem.lower()[index.state(0, k)], problem.initial()[k]);
            assert_eq!(problem.upper()[index.state(0, k)], problem.initial()[k]);
        }
        for i in 0..index.n_steps {
            for j in 0..2 {
                assert_eq!(problem.lower()[index.control(i, j)], 0.0);
                assert_eq!(problem.upper()[index.control(i, j)], f64::INFINITY);
            }
        }
        // Interior node states are free.
        assert_eq!(problem.lower()[index.state(1, 0)], f64::NEG_INFINITY);
    }

    #[test]
    fn perturbing_one_state_touches_few_defects() {
        let problem = dengue_problem(0.25, 13.0);
        let index = *problem.index_map();
        let z = packed_zero_control(&problem);
        let base = problem.evaluate_defects(&z);
        // Perturb x3 at an interior node.
        let var = index.state(7, 2);
        let mut zp = z.clone();
        zp[var] += 1e-3;
        let bumped = problem.evaluate_defects(&zp);
        let changed: Vec<usize> = base
            .iter()
            .zip(&bumped)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(r, _)| r)
            .collect();
        assert!(changed.len() <= 6, "changed {changed:?}");
        // Exactly the rows where the variable is structurally present.
        let structural: Vec<usize> = problem
            .jacobian_pattern()
            .iter()
            .filter(|&&(_, c)| c == var)
            .map(|&(r, _)| r)
            .collect();
        assert_eq!(changed, structural);
        // x3 feeds defects (6,2), (7,1), (7,2), (7,3), (7,4).
        assert_eq!(
            changed,
            vec![
                index.defect(6, 2),
                index.defect(7, 1),
                index.defect(7, 2),
                index.defect(7, 3),
                index.defect(7, 4)
            ]
        );
    }

    #[test]
    fn jacobian_control_and_identity_entries() {
        let problem = dengue_problem(0.25, 13.0);
        let index = *problem.index_map();
        let z = probe_vector(&problem, 1);
        let mut vals = vec![0.0; problem.jacobian_pattern().len()];
        problem.jacobian_values_into(&z, &mut vals);
        let lookup = |r: usize, c: usize| -> f64 {
            problem
                .jacobian_pattern()
                .iter()
                .zip(&vals)
                .find(|(&(pr, pc), _)| pr == r && pc == c)
                .map(|(_, &v)| v)
                .expect("entry present in pattern")
        };
        for i in [0, 5, 11] {
            // ∂defect(i,1)/∂u1(i) = -h·(-1) = +h
            assert_relative_eq!(
                lookup(index.defect(i, 0), index.control(i, 0)),
                0.25,
                max_relative = 1e-15
            );
            // Identity block on the next node.
            for k in 0..5 {
                assert_eq!(lookup(index.defect(i, k), index.state(i + 1, k)), 1.0);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let problem = dengue_problem(0.25, 13.0);
        let z = probe_vector(&problem, 7);
        let mut vals = vec![0.0; problem.jacobian_pattern().len()];
        problem.jacobian_values_into(&z, &mut vals);
        let fd_dense = crate::fd::jacobian(
            |zz, out| problem.evaluate_defects_seq_into(zz, out),
            problem.n_eq(),
            &z,
            1e-6,
        );
        let n = problem.n_vars();
        let mut err = 0.0_f64;
        for (&(r, c), &v) in problem.jacobian_pattern().iter().zip(&vals) {
            err = err.max(crate::fd::scaled_rel_err(v, fd_dense[r * n + c]));
        }
        assert!(err <= 1e-6, "max FD mismatch {err:.3e}");
        // Entries outside the pattern are structurally zero.
        let structural: std::collections::HashSet<(usize, usize)> =
            problem.jacobian_pattern().iter().copied().collect();
        let mut worst_off = 0.0_f64;
        for r in 0..problem.n_eq() {
            for c in 0..n {
                if !structural.contains(&(r, c)) {
                    worst_off = worst_off.max(fd_dense[r * n + c].abs());
                }
            }
        }
        assert!(worst_off <= 1e-9, "off-pattern derivative {worst_off:.3e}");
    }

    #[test]
    fn pattern_is_stable_across_evaluations() {
        let problem = dengue_problem(0.25, 13.0);
        let fingerprint = |p: &[(usize, usize)]| -> u64 {
            use std::hash::{Hash, Hasher};
            let mut h = std::collections::hash_map::DefaultHasher::new();
            p.hash(&mut h);
            h.finish()
        };
        let first = fingerprint(problem.jacobian_pattern());
        let mut vals = vec![0.0; problem.jacobian_pattern().len()];
        for salt in 0..100 {
            let z = probe_vector(&problem, salt);
            problem.jacobian_values_into(&z, &mut vals);
            assert!(vals.iter().all(|v| v.is_finite()));
            assert_eq!(fingerprint(problem.jacobian_pattern()), first);
        }
    }

    #[test]
    fn parallel_and_sequential_paths_agree_bitwise() {
        let problem = dengue_problem(0.25, 52.0);
        let z = probe_vector(&problem, 3);
        let mut a = vec![0.0; problem.n_eq()];
        let mut b = vec![0.0; problem.n_eq()];
        problem.evaluate_defects_into(&z, &mut a);
        problem.evaluate_defects_seq_into(&z, &mut b);
        assert_eq!(a, b);
        let mut va = vec![0.0; problem.jacobian_pattern().len()];
        let mut vb = vec![0.0; problem.jacobian_pattern().len()];
        problem.jacobian_values_par_into(&z, &mut va);
        problem.jacobian_values_seq_into(&z, &mut vb);
        assert_eq!(va, vb);
    }

    #[test]
    fn defects_match_independent_recomputation() {
        // Independent oracle: recompute x(i+1) - x(i) - h·f from scratch
        // with direct model calls, no shared assembly code.
        let problem = dengue_problem(0.25, 13.0);
        let index = *problem.index_map();
        let z = probe_vector(&problem, 11);
        let defects = problem.evaluate_defects(&z);
        let p = *problem.system().params();
        let h = problem.grid().h();
        for i in 0..index.n_steps {
            let s = State::from_slice(&z[index.state(i, 0)..=index.state(i, 4)]);
            let c = crate::model::Control::new(
                z[index.control(i, 0)],
                z[index.control(i, 1)],
            );
            let f = crate::model::dynamics(problem.grid().node_time(i), &s, &c, &p).unwrap();
            for k in 0..5 {
                let expected = z[index.state(i + 1, k)] - z[index.state(i, k)] - h * f[k];
                assert_eq!(defects[index.defect(i, k)], expected);
            }
        }
    }

    #[test]
    fn terminal_fix_and_free_controls() {
        let grid = TimeGrid::from_step(0.01, 1.0).unwrap();
        let options = TranscribeOptions {
            control_bounds: ControlBounds::Free,
            terminal_state: vec![Some(0.0), None],
        };
        let problem =
            transcribe(crate::verify::MinEffortTransfer, grid, &[1.0, 0.0], &options).unwrap();
        let index = *problem.index_map();
        assert_eq!(problem.lower()[index.state(100, 0)], 0.0);
        assert_eq!(problem.upper()[index.state(100, 0)], 0.0);
        assert_eq!(problem.lower()[index.state(100, 1)], f64::NEG_INFINITY);
        assert_eq!(problem.lower()[index.control(3, 0)], f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_nonzero_initial_cost_and_bad_dims() {
        let grid = TimeGrid::from_step(0.25, 13.0).unwrap();
        let model = DengueModel::new(ParameterSet::default()).unwrap();
        let err = transcribe(
            model.clone(),
            grid,
            &[1.0, 0.12, 0.004, 0.05, 0.5],
            &TranscribeOptions::default(),
        );
        assert!(err.is_err());
        let err = transcribe(model, grid, &[1.0, 0.0], &TranscribeOptions::default());
        assert!(matches!(err, Err(TranscriptionError::Dimension { .. })));
    }

    #[test]
    fn dump_contains_dimensions_and_defects() {
        let problem = dengue_problem(0.25, 13.0);
        let z = packed_zero_control(&problem);
        let dump = problem.dump_json(&z).unwrap();
        assert_eq!(dump["n_vars"], 369);
        assert_eq!(dump["n_eq"], 260);
        assert_eq!(dump["defects"].as_array().unwrap().len(), 260);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pack_extract_round_trip(salt in 0u64..1000) {
            let problem = dengue_problem(0.5, 13.0);
            let z = probe_vector(&problem, salt);
            let extracted = problem.extract_trajectory(&z).unwrap().trajectory;
            let repacked = problem.pack_trajectory(&extracted).unwrap();
            prop_assert_eq!(z, repacked);
        }

        #[test]
        fn simulated_schedules_always_pack_feasible(
            u1 in 0.0..0.1f64,
            u2 in 0.0..0.1f64,
        ) {
            let problem = dengue_problem(0.25, 26.0);
            let schedule = ControlSchedule::constant(*problem.grid(), &[u1, u2]);
            let Ok(traj) = euler_simulate(problem.system(), problem.initial(), &schedule) else {
                return Ok(());
            };
            let z = problem.pack_trajectory(&traj).unwrap();
            prop_assert!(inf_norm(&problem.evaluate_defects(&z)) <= 1e-12);
            // And the zero-defect vector extracts back to a trajectory that
            // re-simulation reproduces.
            let extracted = problem.extract_trajectory(&z).unwrap().trajectory;
            let resim = euler_simulate(
                problem.system(),
                extracted.state(0),
                extracted.controls(),
            )
            .unwrap();
            let dev = extracted
                .states_flat()
                .iter()
                .zip(resim.states_flat())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(dev <= 1e-10);
        }
    }
}

impl<S: ControlledSystem> NlpProblem for TranscribedProblem<S> {
    fn n_vars(&self) -> usize {
        self.index.n_vars()
    }

    fn n_eq(&self) -> usize {
        self.index.n_eq()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &[f64]) -> f64 {
        z[self.index.state(self.index.n_steps, self.index.n_states - 1)]
    }

    fn objective_gradient_into(&self, z: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(z.len(), grad.len());
        grad.fill(0.0);
        grad[self.index.state(self.index.n_steps, self.index.n_states - 1)] = 1.0;
    }

    fn constraints_into(&self, z: &[f64], out: &mut [f64]) {
        self.evaluate_defects_into(z, out);
    }

    fn jacobian_pattern(&self) -> &[(usize, usize)] {
        &self.pattern
    }

    fn jacobian_values_into(&self, z: &[f64], vals: &mut [f64]) {
        self.jacobian_values_par_into(z, vals);
    }
}
