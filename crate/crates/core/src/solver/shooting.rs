//! Single-shooting cross-check: states eliminated by forward Euler
//! simulation, controls optimized directly.
//!
//! The gradient comes from the discrete adjoint of the Euler recursion — a
//! reverse sweep through the stored states using the transposed dynamics
//! Jacobians — so it is exact for the discrete problem, not an approximation
//! of the continuous one. This makes the method an independent route to the
//! same discrete optimum that the transcribed NLP targets.

use std::cell::Cell;
use std::time::Instant;

use crate::integrator::{euler_simulate, ControlSchedule, SimError, TimeGrid, Trajectory};
use crate::solver::{
    minimize_box, InnerOptions, InnerStatus, IterationRecord, SolveReport, SolveStatus,
    SolverConfig, SolverError,
};
use crate::system::ControlledSystem;
use crate::transcription::ControlBounds;

/// Quadratic terminal-state penalty `Σ_j w_j·(x_j(t_f) − target_j)²`.
#[derive(Debug, Clone)]
pub struct TerminalPenalty {
    pub weights: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ShootingOptions {
    pub control_bounds: ControlBounds,
    pub terminal_penalty: Option<TerminalPenalty>,
}

/// Result of a shooting solve.
#[derive(Debug, Clone)]
pub struct ShootingSolution {
    pub controls: ControlSchedule,
    pub trajectory: Trajectory,
    /// Accumulated running cost of the final trajectory (excludes any
    /// terminal penalty; `report.objective` includes it).
    pub cost: f64,
    pub report: SolveReport,
}

/// Objective and exact discrete-adjoint gradient at a flattened control
/// vector. Exposed so the gradient can be finite-difference checked.
pub fn objective_and_gradient<S: ControlledSystem + ?Sized>(
    system: &S,
    grid: &TimeGrid,
    initial: &[f64],
    u_flat: &[f64],
    penalty: Option<&TerminalPenalty>,
) -> Result<(f64, Vec<f64>), SimError> {
    let nx = system.n_states();
    let nu = system.n_controls();
    let n = grid.n_steps();
    if u_flat.len() != n * nu {
        return Err(SimError::Dimension {
            what: "flattened controls",
            expected: n * nu,
            got: u_flat.len(),
        });
    }
    let schedule = ControlSchedule::from_rows(*grid, nu, u_flat.to_vec())?;
    let traj = euler_simulate(system, initial, &schedule)?;

    let final_state = traj.final_state();
    let mut objective = final_state[nx - 1];
    // Adjoint seed: ∂J/∂x(N).
    let mut p = vec![0.0; nx];
    p[nx - 1] = 1.0;
    if let Some(pen) = penalty {
        for j in 0..nx {
            let w = pen.weights.get(j).copied().unwrap_or(0.0);
            if w != 0.0 {
                let dev = final_state[j] - pen.targets.get(j).copied().unwrap_or(0.0);
                objective += w * dev * dev;
                p[j] += 2.0 * w * dev;
            }
        }
    }

    let h = grid.h();
    let mut grad = vec![0.0; n * nu];
    let mut jx = vec![0.0; nx * nx];
    let mut ju = vec![0.0; nx * nu];
    let mut p_next = vec![0.0; nx];
    for i in (0..n).rev() {
        let x = traj.state(i);
        let u = schedule.interval(i);
        system.rhs_jacobian(grid.node_time(i), x, u, &mut jx, &mut ju);
        // p currently holds the adjoint at node i+1.
        for j in 0..nu {
            let mut acc = 0.0;
            for k in 0..nx {
                acc += p[k] * ju[k * nu + j];
            }
            grad[i * nu + j] = h * acc;
        }
        for kp in 0..nx {
            let mut acc = p[kp];
            for k in 0..nx {
                acc += h * p[k] * jx[k * nx + kp];
            }
            p_next[kp] = acc;
        }
        p.copy_from_slice(&p_next);
    }
    Ok((objective, grad))
}

/// Minimize the simulated cost over the control schedule.
pub fn solve_shooting<S: ControlledSystem + ?Sized>(
    system: &S,
    grid: &TimeGrid,
    initial: &[f64],
    u0: &ControlSchedule,
    opts: &ShootingOptions,
    cfg: &SolverConfig,
) -> Result<ShootingSolution, SolverError> {
    cfg.validate()?;
    let nu = system.n_controls();
    let n = grid.n_steps();
    if u0.n_controls() != nu || u0.grid().n_steps() != n {
        return Err(SolverError::Dimension {
            what: "initial control schedule",
            expected: n * nu,
            got: u0.grid().n_steps() * u0.n_controls(),
        });
    }
    let (lower, upper) = control_bound_vectors(&opts.control_bounds, nu, n)?;
    let start = Instant::now();

    let penalty = opts.terminal_penalty.as_ref();
    let bad_eval = Cell::new(false);
    let value = |u: &[f64]| -> f64 {
        match objective_and_gradient(system, grid, initial, u, penalty) {
            Ok((f, _)) => f,
            Err(_) => f64::INFINITY,
        }
    };
    let value_grad = |u: &[f64], g: &mut [f64]| -> f64 {
        match objective_and_gradient(system, grid, initial, u, penalty) {
            Ok((f, grad)) => {
                g.copy_from_slice(&grad);
                f
            }
            Err(_) => {
                bad_eval.set(true);
                g.fill(0.0);
                f64::INFINITY
            }
        }
    };

    let mut history = Vec::new();
    let mut u = u0.as_flat().to_vec();
    let inner_opts = InnerOptions {
        tol_pg: cfg.tol_kkt,
        max_iter: cfg.max_outer.saturating_mul(cfg.max_inner),
        ..Default::default()
    };
    let res = minimize_box(
        &value,
        &value_grad,
        &mut u,
        &lower,
        &upper,
        &inner_opts,
        |it, merit, pg| {
            history.push(IterationRecord {
                outer: 0,
                inner: it,
                merit,
                feasibility: 0.0,
                kkt: pg,
                penalty: 0.0,
            });
        },
    );

    let status = match res.status {
        InnerStatus::Converged => SolveStatus::Converged,
        InnerStatus::Stalled if res.pg_norm <= cfg.tol_kkt => SolveStatus::Converged,
        InnerStatus::NonFinite => SolveStatus::Divergence,
        _ => SolveStatus::IterationCap,
    };
    let controls = ControlSchedule::from_rows(*grid, nu, u)?;
    let trajectory = euler_simulate(system, initial, &controls)?;
    let report = SolveReport {
        status,
        objective: res.f,
        kkt_residual: res.pg_norm,
        feasibility_residual: 0.0,
        outer_iterations: 1,
        inner_iterations: res.iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        history,
    };
    Ok(ShootingSolution {
        cost: trajectory.total_cost,
        controls,
        trajectory,
        report,
    })
}

fn control_bound_vectors(
    bounds: &ControlBounds,
    nu: usize,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let mut lower = vec![f64::NEG_INFINITY; n * nu];
    let mut upper = vec![f64::INFINITY; n * nu];
    match bounds {
        ControlBounds::NonNegative => lower.fill(0.0),
        ControlBounds::Free => {}
        ControlBounds::Custom { lower: lo, upper: hi } => {
            if lo.len() != nu || hi.len() != nu {
                return Err(SolverError::Dimension {
                    what: "custom control bounds",
                    expected: nu,
                    got: lo.len().max(hi.len()),
                });
            }
            for i in 0..n {
                for j in 0..nu {
                    lower[i * nu + j] = lo[j];
                    upper[i * nu + j] = hi[j];
                }
            }
        }
    }
    Ok((lower, upper))
}
