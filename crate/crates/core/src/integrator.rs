//! Fixed-step forward simulation of a controlled system.
//!
//! Explicit Euler (`x_{n+1} = x_n + h·f(t_n, x_n, u_n)`) is the canonical
//! scheme: the transcription module imposes exactly this recursion as
//! equality constraints, so simulation and transcription agree to rounding.
//! A classical 4th-order one-step method serves as an independent accuracy
//! oracle for convergence studies, never as part of the optimization path.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::system::ControlledSystem;

/// Any state component beyond this magnitude aborts a run as divergent.
/// The model is normalized, so healthy trajectories stay O(1).
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state diverged at step {step} (component {component} = {value:e})")]
    Divergence {
        step: usize,
        component: usize,
        value: f64,
    },
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("grid is inconsistent: {0}")]
    Grid(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform time grid `t_i = t0 + i·h`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    h: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, h: f64, n_steps: usize) -> Result<Self, SimError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(SimError::Grid(format!("step length must be positive, got {h}")));
        }
        if n_steps == 0 {
            return Err(SimError::Grid("need at least one step".into()));
        }
        Ok(TimeGrid { t0, h, n_steps })
    }

    /// Grid from a step length that must divide the horizon.
    pub fn from_step(h: f64, t_final: f64) -> Result<Self, SimError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(SimError::Grid(format!("step length must be positive, got {h}")));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(SimError::Grid(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        let n = (t_final / h).round();
        let tol = 8.0 * f64::EPSILON * t_final.max(1.0) / h;
        if n < 1.0 || (t_final / h - n).abs() > tol {
            return Err(SimError::Grid(format!(
                "step {h} does not divide the horizon {t_final}"
            )));
        }
        TimeGrid::new(0.0, h, n as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> f64 {
        self.t0 + self.h * self.n_steps as f64
    }

    /// Time at grid node `i`.
    pub fn node_time(&self, i: usize) -> f64 {
        self.t0 + self.h * i as f64
    }
}

/// Piecewise-constant controls: `values` row `i` holds on `[t_i, t_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    grid: TimeGrid,
    n_controls: usize,
    values: Vec<f64>,
}

impl ControlSchedule {
    pub fn from_rows(grid: TimeGrid, n_controls: usize, rows: Vec<f64>) -> Result<Self, SimError> {
        if rows.len() != grid.n_steps() * n_controls {
            return Err(SimError::Dimension {
                what: "control values",
                expected: grid.n_steps() * n_controls,
                got: rows.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|v| !v.is_finite()) {
            return Err(SimError::Format(format!("non-finite control value {bad}")));
        }
        Ok(ControlSchedule {
            grid,
            n_controls,
            values: rows,
        })
    }

    pub fn zeros(grid: TimeGrid, n_controls: usize) -> Self {
        let values = vec![0.0; grid.n_steps() * n_controls];
        ControlSchedule {
            grid,
            n_controls,
            values,
        }
    }

    /// The same control vector on every interval.
    pub fn constant(grid: TimeGrid, control: &[f64]) -> Self {
        let n = grid.n_steps();
        let mut values = Vec::with_capacity(n * control.len());
        for _ in 0..n {
            values.extend_from_slice(control);
        }
        ControlSchedule {
            grid,
            n_controls: control.len(),
            values,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    /// Control vector on interval `i`.
    pub fn interval(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_controls..(i + 1) * self.n_controls]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A simulated (or extracted) trajectory: `n_steps + 1` state rows plus the
/// control schedule that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    n_states: usize,
    states: Vec<f64>,
    controls: ControlSchedule,
    /// Final value of the last state component (the accumulated-cost slot).
    pub total_cost: f64,
}

impl Trajectory {
    pub fn new(
        grid: TimeGrid,
        n_states: usize,
        states: Vec<f64>,
        controls: ControlSchedule,
    ) -> Result<Self, SimError> {
        let expected = (grid.n_steps() + 1) * n_states;
        if states.len() != expected {
            return Err(SimError::Dimension {
                what: "state values",
                expected,
                got: states.len(),
            });
        }
        if controls.grid() != &grid {
            return Err(SimError::Grid("control schedule grid differs".into()));
        }
        let total_cost = states[states.len() - 1];
        Ok(Trajectory {
            grid,
            n_states,
            states,
            controls,
            total_cost,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// State row at node `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n_states..(i + 1) * self.n_states]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.n_steps())
    }

    pub fn controls(&self) -> &ControlSchedule {
        &self.controls
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    /// Series of one state component over all nodes.
    pub fn component(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.states
            .chunks_exact(self.n_states)
            .map(move |row| row[k])
    }

    /// Write the frozen CSV layout: header `t,x1..,u1..`, one row per node,
    /// controls repeating the interval value (last row repeats the final
    /// interval), floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        let nx = self.n_states;
        let nu = self.controls.n_controls();
        let mut header = String::from("t");
        for k in 1..=nx {
            header.push_str(&format!(",x{k}"));
        }
        for j in 1..=nu {
            header.push_str(&format!(",u{j}"));
        }
        writeln!(w, "{header}")?;
        let n = self.grid.n_steps();
        for i in 0..=n {
            let mut row = format!("{:.16e}", self.grid.node_time(i));
            for v in self.state(i) {
                row.push_str(&format!(",{v:.16e}"));
            }
            let ctrl = self.controls.interval(i.min(n - 1));
            for v in ctrl {
                row.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Parse the CSV layout written by [`Trajectory::write_csv`]. Dimensions
    /// come from the header.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| SimError::Format("empty CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(SimError::Format(format!(
                "expected first column `t`, got `{}`",
                cols.first().unwrap_or(&"")
            )));
        }
        let nx = cols.iter().filter(|c| c.starts_with('x')).count();
        let nu = cols.iter().filter(|c| c.starts_with('u')).count();
        if nx == 0 || 1 + nx + nu != cols.len() {
            return Err(SimError::Format(format!("unrecognized header `{header}`")));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut controls = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() {
                return Err(SimError::Format(format!(
                    "row has {} fields, expected {}",
                    fields.len(),
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| SimError::Format(format!("bad float `{s}`: {e}")))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..=nx] {
                states.push(parse(f)?);
            }
            for f in &fields[1 + nx..] {
                controls.push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(SimError::Format("need at least two rows".into()));
        }
        let n = times.len() - 1;
        let h = times[1] - times[0];
        let grid = TimeGrid::new(times[0], h, n)?;
        for (i, &t) in times.iter().enumerate() {
            if (t - grid.node_time(i)).abs() > 1e-9 * grid.t_final().abs().max(1.0) {
                return Err(SimError::Format(format!(
                    "non-uniform time column at row {i}"
                )));
            }
        }
        // The final row repeats the last interval's control; drop it.
        controls.truncate(n * nu);
        let schedule = ControlSchedule::from_rows(grid, nu, controls)?;
        Trajectory::new(grid, nx, states, schedule)
    }
}

fn check_state(x: &[f64], step: usize) -> Result<(), SimError> {
    for (k, &v) in x.iter().enumerate() {
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(SimError::Divergence {
                step,
                component: k,
                value: v,
            });
        }
    }
    Ok(())
}

/// Explicit Euler simulation under a piecewise-constant control schedule.
///
/// Deterministic and bit-reproducible for identical inputs.
pub fn euler_simulate<S: ControlledSystem + ?Sized>(
    system: &S,
    initial: &[f64],
    schedule: &ControlSchedule,
) -> Result<Trajectory, SimError> {
    let nx = system.n_states();
    if initial.len() != nx {
        return Err(SimError::Dimension {
            what: "initial state",
            expected: nx,
            got: initial.len(),
        });
    }
    if schedule.n_controls() != system.n_controls() {
        return Err(SimError::Dimension {
            what: "controls",
            expected: system.n_controls(),
            got: schedule.n_controls(),
        });
    }
    check_state(initial, 0)?;

    let grid = *schedule.grid();
    let n = grid.n_steps();
    let h = grid.h();
    let mut states = Vec::with_capacity((n + 1) * nx);
    states.extend_from_slice(initial);
    let mut x = initial.to_vec();
    let mut dx = vec![0.0; nx];
    for i in 0..n {
        system.rhs(grid.node_time(i), &x, schedule.interval(i), &mut dx);
        for k in 0..nx {
            x[k] += h * dx[k];
        }
        check_state(&x, i + 1)?;
        states.extend_from_slice(&x);
    }
    Trajectory::new(grid, nx, states, schedule.clone())
}

/// Classical 4th-order one-step simulation, used as the accuracy oracle.
///
/// `refine` subdivides each control interval while holding the control
/// constant; states are recorded at the control-grid nodes only.
pub fn rk4_simulate<S: ControlledSystem + ?Sized>(
    system: &S,
    initial: &[f64],
    schedule: &ControlSchedule,
    refine: usize,
) -> Result<Trajectory, SimError> {
    let nx = system.n_states();
    if initial.len() != nx {
        return Err(SimError::Dimension {
            what: "initial state",
            expected: nx,
            got: initial.len(),
        });
    }
    if refine == 0 {
        return Err(SimError::Grid("refine must be at least 1".into()));
    }
    check_state(initial, 0)?;

    let grid = *schedule.grid();
    let n = grid.n_steps();
    let hs = grid.h() / refine as f64;
    let mut states = Vec::with_capacity((n + 1) * nx);
    states.extend_from_slice(initial);
    let mut x = initial.to_vec();
    let mut k1 = vec![0.0; nx];
    let mut k2 = vec![0.0; nx];
    let mut k3 = vec![0.0; nx];
    let mut k4 = vec![0.0; nx];
    let mut xt = vec![0.0; nx];
    for i in 0..n {
        let u = schedule.interval(i);
        for sub in 0..refine {
            let t = grid.node_time(i) + hs * sub as f64;
            system.rhs(t, &x, u, &mut k1);
            for k in 0..nx {
                xt[k] = x[k] + 0.5 * hs * k1[k];
            }
            system.rhs(t + 0.5 * hs, &xt, u, &mut k2);
            for k in 0..nx {
                xt[k] = x[k] + 0.5 * hs * k2[k];
            }
            system.rhs(t + 0.5 * hs, &xt, u, &mut k3);
            for k in 0..nx {
                xt[k] = x[k] + hs * k3[k];
            }
            system.rhs(t + hs, &xt, u, &mut k4);
            for k in 0..nx {
                x[k] += hs / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
            check_state(&x, i + 1)?;
        }
        states.extend_from_slice(&x);
    }
    Trajectory::new(grid, nx, states, schedule.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMethod {
    Euler,
    Rk4,
}

/// Result of an empirical order-of-convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceEstimate {
    /// Least-squares slope of log(error) against log(h).
    pub slope: f64,
    /// `(h, max-abs final-state error vs the reference)` per retained run.
    pub errors: Vec<(f64, f64)>,
    /// Step sizes dropped because the run diverged.
    pub excluded: Vec<f64>,
}

/// Estimate the global order of `method` on the system under a constant
/// control, using a refined 4th-order solution as the reference.
pub fn convergence_order<S: ControlledSystem + ?Sized>(
    system: &S,
    initial: &[f64],
    control: &[f64],
    t_final: f64,
    h_list: &[f64],
    method: IntegrationMethod,
) -> Result<ConvergenceEstimate, SimError> {
    if h_list.len() < 3 {
        return Err(SimError::Grid("need at least three step sizes".into()));
    }
    let mut h_min = f64::INFINITY;
    for &h in h_list {
        TimeGrid::from_step(h, t_final)?;
        h_min = h_min.min(h);
    }
    // Reference: 4th-order at substep <= 0.01, at least 4x finer than the
    // smallest h under study.
    let ref_grid = TimeGrid::from_step(h_min, t_final)?;
    let ref_refine = ((h_min / 0.01).ceil() as usize).max(4);
    let ref_schedule = ControlSchedule::constant(ref_grid, control);
    let reference = rk4_simulate(system, initial, &ref_schedule, ref_refine)?;
    let ref_final = reference.final_state();

    let mut errors = Vec::new();
    let mut excluded = Vec::new();
    for &h in h_list {
        let grid = TimeGrid::from_step(h, t_final)?;
        let schedule = ControlSchedule::constant(grid, control);
        let run = match method {
            IntegrationMethod::Euler => euler_simulate(system, initial, &schedule),
            IntegrationMethod::Rk4 => rk4_simulate(system, initial, &schedule, 1),
        };
        match run {
            Ok(traj) => {
                let err = traj
                    .final_state()
                    .iter()
                    .zip(ref_final)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                if err > 0.0 && err.is_finite() {
                    errors.push((h, err));
                } else {
                    log::warn!("order study: h={h} produced error {err}, excluded");
                    excluded.push(h);
                }
            }
            Err(e) => {
                log::warn!("order study: h={h} diverged ({e}), excluded");
                excluded.push(h);
            }
        }
    }
    if errors.len() < 2 {
        return Err(SimError::Grid(
            "too few convergent runs for a slope estimate".into(),
        ));
    }
    let n = errors.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (h, e) in &errors {
        sx += h.ln();
        sy += e.ln();
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for (h, e) in &errors {
        num += (h.ln() - mx) * (e.ln() - my);
        den += (h.ln() - mx).powi(2);
    }
    Ok(ConvergenceEstimate {
        slope: num / den,
        errors,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DengueModel, ParameterSet, State};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// ẋ = -x, the textbook linear test system. No controls.
    struct Decay;
    impl ControlledSystem for Decay {
        fn n_states(&self) -> usize {
            1
        }
        fn n_controls(&self) -> usize {
            0
        }
        fn rhs(&self, _t: f64, x: &[f64], _u: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
        fn rhs_jacobian(&self, _t: f64, _x: &[f64], _u: &[f64], jx: &mut [f64], _ju: &mut [f64]) {
            jx[0] = -1.0;
        }
    }

    fn dengue() -> DengueModel {
        DengueModel::new(ParameterSet::default()).unwrap()
    }

    fn initial() -> [f64; 5] {
        State::initial(1.0, 0.12, 0.004, 0.05).to_array()
    }

    #[test]
    fn zero_state_stays_zero() {
        let grid = TimeGrid::from_step(0.5, 4.0).unwrap();
        let schedule = ControlSchedule::zeros(grid, 2);
        let traj = euler_simulate(&dengue(), &[0.0; 5], &schedule).unwrap();
        assert!(traj.states_flat().iter().all(|&v| v == 0.0));
        let traj = rk4_simulate(&dengue(), &[0.0; 5], &schedule, 5).unwrap();
        assert!(traj.states_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn euler_single_step_values() {
        let grid = TimeGrid::new(0.0, 0.25, 1).unwrap();
        let schedule = ControlSchedule::zeros(grid, 2);
        let traj = euler_simulate(&dengue(), &initial(), &schedule).unwrap();
        let x1 = traj.final_state();
        assert_relative_eq!(x1[0], 0.9925, max_relative = 1e-15);
        // 0.004 + 0.25 * 0.011352
        assert_relative_eq!(x1[2], 0.006838, max_relative = 1e-15);
    }

    #[test]
    fn rk4_matches_exponential() {
        let grid = TimeGrid::from_step(0.25, 1.0).unwrap();
        let schedule = ControlSchedule::zeros(grid, 0);
        // Classical 4th-order at h=0.25 lands within ~1.5e-5 of e^{-1}.
        let traj = rk4_simulate(&Decay, &[1.0], &schedule, 1).unwrap();
        assert_relative_eq!(traj.final_state()[0], (-1.0f64).exp(), epsilon = 2e-5);
        // Refining the same grid tightens it well past that.
        let traj = rk4_simulate(&Decay, &[1.0], &schedule, 4).unwrap();
        assert_relative_eq!(traj.final_state()[0], (-1.0f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn rk4_self_consistency_under_refinement() {
        let grid = TimeGrid::from_step(0.25, 52.0).unwrap();
        let schedule = ControlSchedule::zeros(grid, 2);
        let a = rk4_simulate(&dengue(), &initial(), &schedule, 25).unwrap();
        let b = rk4_simulate(&dengue(), &initial(), &schedule, 50).unwrap();
        for (x, y) in a.final_state().iter().zip(b.final_state()) {
            assert!((x - y).abs() <= 1e-8, "refine=25 vs 50 differ: {x} vs {y}");
        }
    }

    #[test]
    fn euler_agrees_with_oracle_over_horizon() {
        let grid = TimeGrid::from_step(0.25, 52.0).unwrap();
        let schedule = ControlSchedule::zeros(grid, 2);
        let euler = euler_simulate(&dengue(), &initial(), &schedule).unwrap();
        let oracle = rk4_simulate(&dengue(), &initial(), &schedule, 25).unwrap();
        for (k, (a, b)) in euler
            .final_state()
            .iter()
            .zip(oracle.final_state())
            .enumerate()
        {
            let scale = b.abs().max(1e-12);
            assert!(
                (a - b).abs() / scale <= 0.02,
                "component {k}: euler {a} vs oracle {b}"
            );
        }
    }

    #[test]
    fn euler_error_shrinks_when_h_halves() {
        let p = ParameterSet::default();
        let run = |h: f64| {
            let grid = TimeGrid::from_step(h, p.t_final).unwrap();
            let schedule = ControlSchedule::zeros(grid, 2);
            euler_simulate(&dengue(), &initial(), &schedule).unwrap()
        };
        let reference = {
            let grid = TimeGrid::from_step(0.25, p.t_final).unwrap();
            let schedule = ControlSchedule::zeros(grid, 2);
            rk4_simulate(&dengue(), &initial(), &schedule, 25).unwrap()
        };
        let err = |traj: &Trajectory| {
            traj.final_state()
                .iter()
                .zip(reference.final_state())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let coarse = err(&run(0.5));
        let fine = err(&run(0.25));
        assert!(fine < coarse, "halving h did not reduce error: {coarse} -> {fine}");
    }

    #[test]
    fn euler_order_on_linear_system() {
        let est = convergence_order(
            &Decay,
            &[1.0],
            &[],
            1.0,
            &[0.25, 0.125, 0.0625, 0.03125],
            IntegrationMethod::Euler,
        )
        .unwrap();
        assert!(
            (est.slope - 1.0).abs() <= 0.05,
            "expected order 1, got {}",
            est.slope
        );
    }

    #[test]
    fn divergence_reports_step_index() {
        // Strongly unstable system: ẋ = x^2 from x=2 blows up quickly.
        struct Blowup;
        impl ControlledSystem for Blowup {
            fn n_states(&self) -> usize {
                1
            }
            fn n_controls(&self) -> usize {
                0
            }
            fn rhs(&self, _t: f64, x: &[f64], _u: &[f64], dx: &mut [f64]) {
                dx[0] = x[0] * x[0];
            }
            fn rhs_jacobian(
                &self,
                _t: f64,
                x: &[f64],
                _u: &[f64],
                jx: &mut [f64],
                _ju: &mut [f64],
            ) {
                jx[0] = 2.0 * x[0];
            }
        }
        let grid = TimeGrid::from_step(1.0, 20.0).unwrap();
        let schedule = ControlSchedule::zeros(grid, 0);
        match euler_simulate(&Blowup, &[2.0], &schedule) {
            Err(SimError::Divergence { step, .. }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let grid = TimeGrid::from_step(0.25, 13.0).unwrap();
        let schedule = ControlSchedule::constant(grid, &[0.05, 0.01]);
        let traj = euler_simulate(&dengue(), &initial(), &schedule).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.states_flat(), traj.states_flat());
        assert_eq!(back.controls().as_flat(), traj.controls().as_flat());
        assert_eq!(back.total_cost.to_bits(), traj.total_cost.to_bits());
    }

    #[test]
    fn csv_header_is_frozen() {
        let grid = TimeGrid::from_step(0.25, 1.0).unwrap();
        let schedule = ControlSchedule::zeros(grid, 2);
        let traj = euler_simulate(&dengue(), &initial(), &schedule).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,x3,x4,x5,u1,u2\n"));
        assert_eq!(text.lines().count(), 1 + 4 + 1);
    }

    #[test]
    fn grid_rejects_non_divisible_step() {
        assert!(TimeGrid::from_step(0.3, 1.0).is_err());
        assert!(TimeGrid::from_step(0.1, 52.0).is_ok());
    }

    proptest! {
        #[test]
        fn cost_component_is_non_decreasing(
            u1 in 0.0..0.1f64,
            u2 in 0.0..0.1f64,
            h in prop::sample::select(vec![0.125, 0.25]),
        ) {
            let grid = TimeGrid::from_step(h, 13.0).unwrap();
            let schedule = ControlSchedule::constant(grid, &[u1, u2]);
            // Divergent runs abort with an error and carry no trajectory;
            // the property quantifies over completed runs.
            let Ok(traj) = euler_simulate(&dengue(), &initial(), &schedule) else {
                return Ok(());
            };
            let costs: Vec<f64> = traj.component(4).collect();
            prop_assert_eq!(costs[0], 0.0);
            for w in costs.windows(2) {
                prop_assert!(w[1] >= w[0], "x5 decreased: {} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn simulation_is_deterministic(u1 in 0.0..0.3f64) {
            let grid = TimeGrid::from_step(0.25, 13.0).unwrap();
            let schedule = ControlSchedule::constant(grid, &[u1, 0.02]);
            let a = euler_simulate(&dengue(), &initial(), &schedule).unwrap();
            let b = euler_simulate(&dengue(), &initial(), &schedule).unwrap();
            prop_assert_eq!(a.states_flat(), b.states_flat());
        }
    }
}
