//! Trajectory optimization for a seasonal mosquito-borne epidemic control model.
//!
//! The crate covers the full pipeline from model to optimum:
//!
//! - [`model`] — a four-state vector-borne epidemic model (mosquito density,
//!   infected mosquitoes, infected individuals, popular motivation) with two
//!   investment controls and a quadratic running cost, augmented with a fifth
//!   cost-accumulator state so the objective becomes a terminal value.
//! - [`integrator`] — fixed-step explicit Euler simulation (the canonical
//!   discretization) plus a classical 4th-order method used as an accuracy
//!   oracle, and CSV trajectory export.
//! - [`transcription`] — direct transcription of the control problem into a
//!   sparse equality-constrained NLP (node states + interval controls as
//!   decision variables, Euler defects as constraints).
//! - [`solver`] — an augmented-Lagrangian outer loop around a projected
//!   limited-memory quasi-Newton inner solver, plus an independent
//!   single-shooting method with discrete-adjoint gradients for
//!   cross-validation.
//! - [`verify`] — the machine-checkable verification suite behind
//!   `epi-traj-opt verify`.
//!
//! With the `parallel` feature (default) batch evaluations — defect and
//! Jacobian assembly across grid nodes, finite-difference sweeps, multi-start
//! solves — run on rayon. The sequential fallback produces bit-identical
//! results; `benches/parallel.rs` compares the two.

pub mod cli;
pub mod config;
pub mod dual;
pub mod fd;
pub mod integrator;
pub mod model;
pub mod nlp;
pub mod solver;
pub mod system;
pub mod transcription;
pub mod verify;

pub(crate) mod util;

pub use integrator::{ControlSchedule, TimeGrid, Trajectory};
pub use model::{Control, DengueModel, ParameterSet, State};
pub use nlp::NlpProblem;
pub use solver::{SolveReport, SolveStatus, SolverConfig};
