//! Constrained NLP solution.
//!
//! [`solve_nlp`] runs an augmented-Lagrangian outer loop around the
//! projected quasi-Newton inner solver in [`inner`]: each outer iteration
//! minimizes `f(z) + λᵀc(z) + (ρ/2)‖c(z)‖²` over the bound box, then applies
//! the first-order multiplier update `λ ← λ + ρ·c` and grows the penalty
//! tenfold whenever feasibility improved by less than a factor of four.
//!
//! [`shooting`] holds the independent reduced-space method used to
//! cross-validate optima.

mod inner;
pub mod shooting;

use std::cell::Cell;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::nlp::{self, NlpProblem};
use crate::util::inf_norm;

pub(crate) use inner::{minimize_box, minimize_box_warm, InnerOptions, InnerStatus, LbfgsMemory};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Simulation(#[from] crate::integrator::SimError),
}

/// Tolerances and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Stationarity tolerance on the projected Lagrangian gradient.
    pub tol_kkt: f64,
    /// Feasibility tolerance on the defect infinity norm.
    pub tol_feas: f64,
    /// Outer (multiplier/penalty) iteration cap.
    pub max_outer: usize,
    /// Inner quasi-Newton iteration cap per outer iteration.
    pub max_inner: usize,
    /// Initial augmented-Lagrangian penalty.
    pub penalty_init: f64,
    /// Penalty growth factor, applied when feasibility improves by < 4x.
    pub penalty_growth: f64,
    /// Seed for randomized multi-start diagnostics.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_kkt: 1e-8,
            tol_feas: 1e-8,
            max_outer: 50,
            max_inner: 500,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol_kkt > 0.0 && self.tol_feas > 0.0) {
            return Err(SolverError::Config("tolerances must be positive".into()));
        }
        if self.max_outer < 1 || self.max_inner < 1 {
            return Err(SolverError::Config("iteration caps must be >= 1".into()));
        }
        if !(self.penalty_init > 0.0) {
            return Err(SolverError::Config("penalty_init must be positive".into()));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(SolverError::Config("penalty_growth must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationCap,
    Divergence,
}

/// One accepted inner iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub merit: f64,
    pub feasibility: f64,
    pub kkt: f64,
    pub penalty: f64,
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub feasibility_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub wall_time_s: f64,
    pub history: Vec<IterationRecord>,
}

impl SolveReport {
    /// Stream the per-iteration history as CSV.
    pub fn write_history_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "outer,inner,merit,feas,kkt,penalty")?;
        for r in &self.history {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.outer, r.inner, r.merit, r.feasibility, r.kkt, r.penalty
            )?;
        }
        Ok(())
    }
}

/// A converged (or best-effort) primal-dual point.
#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub report: SolveReport,
}

const PENALTY_CAP: f64 = 1e12;

/// Solve an equality- and bound-constrained NLP by the augmented-Lagrangian
/// method. `z0` is projected into the bounds if it violates them.
pub fn solve_nlp<P: NlpProblem + ?Sized>(
    problem: &P,
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<NlpSolution, SolverError> {
    cfg.validate()?;
    let n = problem.n_vars();
    let m = problem.n_eq();
    if z0.len() != n {
        return Err(SolverError::Dimension {
            what: "initial decision vector",
            expected: n,
            got: z0.len(),
        });
    }
    let start = Instant::now();
    let mut z = z0.to_vec();
    nlp::project(&mut z, problem.lower(), problem.upper());

    let mut lambda = vec![0.0; m];
    let mut penalty = cfg.penalty_init;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut feas_prev = f64::INFINITY;
    let mut total_inner = 0usize;
    let nnz = problem.jacobian_pattern().len();

    let mut status = SolveStatus::IterationCap;
    let mut kkt_residual = f64::INFINITY;
    let mut feas_residual = f64::INFINITY;
    let mut multipliers = lambda.clone();
    // Curvature memory survives multiplier updates: they shift the
    // gradient by ρ·Jᵀc but leave the Hessian almost unchanged.
    let mut memory = LbfgsMemory::new();

    // Evaluation scratch shared by the merit closures; a solve is
    // single-threaded, so the RefCell is never contended.
    struct Scratch {
        c: Vec<f64>,
        vals: Vec<f64>,
        w: Vec<f64>,
    }
    let scratch = std::cell::RefCell::new(Scratch {
        c: vec![0.0; m],
        vals: vec![0.0; nnz],
        w: vec![0.0; m],
    });

    for outer in 0..cfg.max_outer {
        // Inner tolerance tracks feasibility progress down to the KKT
        // target: no point polishing a subproblem whose multipliers are
        // still far off.
        let tol_inner = (0.05 * feas_prev).min(1e-3).max(0.3 * cfg.tol_kkt);
        let last_feas = Cell::new(f64::NAN);

        let lam = &lambda;
        let value = |zv: &[f64]| -> f64 {
            let s = &mut *scratch.borrow_mut();
            problem.constraints_into(zv, &mut s.c);
            let mut al = problem.objective(zv);
            for i in 0..m {
                al += lam[i] * s.c[i] + 0.5 * penalty * s.c[i] * s.c[i];
            }
            al
        };
        let value_grad = |zv: &[f64], grad: &mut [f64]| -> f64 {
            let s = &mut *scratch.borrow_mut();
            problem.constraints_into(zv, &mut s.c);
            last_feas.set(inf_norm(&s.c));
            problem.jacobian_values_into(zv, &mut s.vals);
            problem.objective_gradient_into(zv, grad);
            let mut al = problem.objective(zv);
            for i in 0..m {
                al += lam[i] * s.c[i] + 0.5 * penalty * s.c[i] * s.c[i];
                s.w[i] = lam[i] + penalty * s.c[i];
            }
            nlp::jt_mul_acc(problem.jacobian_pattern(), &s.vals, &s.w, grad);
            al
        };

        let inner_opts = InnerOptions {
            tol_pg: tol_inner,
            max_iter: cfg.max_inner,
            ..Default::default()
        };
        let res = minimize_box_warm(
            &value,
            &value_grad,
            &mut z,
            problem.lower(),
            problem.upper(),
            &inner_opts,
            &mut memory,
            |it, merit, pg| {
                history.push(IterationRecord {
                    outer,
                    inner: it,
                    merit,
                    feasibility: last_feas.get(),
                    kkt: pg,
                    penalty,
                });
            },
        );
        total_inner += res.iterations;

        let mut c = vec![0.0; m];
        problem.constraints_into(&z, &mut c);
        let feas = inf_norm(&c);
        feas_residual = feas;
        kkt_residual = res.pg_norm;
        for i in 0..m {
            multipliers[i] = lambda[i] + penalty * c[i];
        }

        if res.status == InnerStatus::NonFinite {
            status = SolveStatus::Divergence;
            break;
        }
        if feas <= cfg.tol_feas && res.pg_norm <= cfg.tol_kkt {
            status = SolveStatus::Converged;
            let report = SolveReport {
                status,
                objective: problem.objective(&z),
                kkt_residual,
                feasibility_residual: feas_residual,
                outer_iterations: outer + 1,
                inner_iterations: total_inner,
                wall_time_s: start.elapsed().as_secs_f64(),
                history,
            };
            return Ok(NlpSolution {
                z,
                multipliers,
                report,
            });
        }

        // First-order multiplier update after each inner solve. Penalty
        // grows when a *solved* subproblem improved feasibility by less
        // than a factor 4; a capped inner says nothing about the
        // multipliers, so it resumes at the same penalty instead.
        lambda.copy_from_slice(&multipliers);
        if res.status != InnerStatus::IterationCap {
            if feas > cfg.tol_feas && feas > feas_prev / 4.0 {
                penalty = (penalty * cfg.penalty_growth).min(PENALTY_CAP);
            }
            feas_prev = feas;
        }
    }

    let report = SolveReport {
        status,
        objective: problem.objective(&z),
        kkt_residual,
        feasibility_residual: feas_residual,
        outer_iterations: cfg.max_outer,
        inner_iterations: total_inner,
        wall_time_s: start.elapsed().as_secs_f64(),
        history,
    };
    Ok(NlpSolution {
        z,
        multipliers,
        report,
    })
}

/// First-order optimality residuals for an equality- and bound-constrained
/// point: `(stationarity, feasibility, complementarity)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `‖P(z − ∇L) − z‖∞` with `∇L = ∇f + Jᵀλ`.
    pub stationarity: f64,
    /// `‖c(z)‖∞`.
    pub feasibility: f64,
    /// Worst product of bound distance and implied bound multiplier.
    pub complementarity: f64,
}

pub fn kkt_residuals<P: NlpProblem + ?Sized>(
    problem: &P,
    z: &[f64],
    multipliers: &[f64],
) -> Result<KktResiduals, SolverError> {
    let n = problem.n_vars();
    let m = problem.n_eq();
    if z.len() != n {
        return Err(SolverError::Dimension {
            what: "decision vector",
            expected: n,
            got: z.len(),
        });
    }
    if multipliers.len() != m {
        return Err(SolverError::Dimension {
            what: "multipliers",
            expected: m,
            got: multipliers.len(),
        });
    }
    let mut c = vec![0.0; m];
    problem.constraints_into(z, &mut c);
    let mut grad_l = vec![0.0; n];
    problem.objective_gradient_into(z, &mut grad_l);
    let mut vals = vec![0.0; problem.jacobian_pattern().len()];
    problem.jacobian_values_into(z, &mut vals);
    nlp::jt_mul_acc(problem.jacobian_pattern(), &vals, multipliers, &mut grad_l);

    let (lower, upper) = (problem.lower(), problem.upper());
    let mut stationarity = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for i in 0..n {
        let step = z[i] - (z[i] - grad_l[i]).max(lower[i]).min(upper[i]);
        stationarity = stationarity.max(step.abs());
        if lower[i].is_finite() {
            complementarity =
                complementarity.max((z[i] - lower[i]).min(grad_l[i].max(0.0)).abs());
        }
        if upper[i].is_finite() {
            complementarity =
                complementarity.max((upper[i] - z[i]).min((-grad_l[i]).max(0.0)).abs());
        }
    }
    Ok(KktResiduals {
        stationarity,
        feasibility: inf_norm(&c),
        complementarity,
    })
}
