//! Command-line interface: `simulate`, `optimize`, `verify`.
//!
//! Exit codes: 0 success, 1 validation error, 2 solver failure,
//! 3 verification failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Mode, Scenario, ScenarioConfig};
use crate::integrator::{euler_simulate, ControlSchedule, SimError, TimeGrid, Trajectory};
use crate::model::{DengueModel, State};
use crate::solver::{solve_nlp, SolveStatus};
use crate::transcription::{transcribe, ControlBounds, TranscribeOptions};
use crate::verify::{self, run_verification, VerifyOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(#[from] ConfigError),
    #[error("simulation diverged: {0}")]
    Diverged(SimError),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("verification failed: {failed} of {total} checks did not pass")]
    Verification { failed: usize, total: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Diverged(_) | CliError::Solver(_) => 2,
            CliError::Verification { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "epi-traj-opt",
    version,
    about = "Simulate and optimize investments against a seasonal mosquito-borne epidemic"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward-simulate the model under the configured constant controls.
    Simulate(CommonArgs),
    /// Solve for the cost-minimizing control schedule.
    Optimize(CommonArgs),
    /// Run the verification suite and write verify.json.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Model parameter override, e.g. --param gamma_f=0.5 (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,

    /// Output directory (default: config output_dir, else current dir).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Grid step override in weeks.
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Skip checks by name or category (e.g. --skip slow). Repeatable.
    #[arg(long)]
    pub skip: Vec<String>,
}

/// Resolve config file + flags into a validated scenario.
fn resolve(common: &CommonArgs, expected: Mode, extra_skip: &[String]) -> Result<Scenario, CliError> {
    let mut config = match &common.config {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(mode) = config.mode {
        if mode != expected {
            return Err(ConfigError::Invalid {
                field: "mode".into(),
                reason: format!("config says {mode:?}, subcommand expects {expected:?}"),
            }
            .into());
        }
    }
    for flag in &common.params {
        config.params.set_from_flag(flag)?;
    }
    if let Some(h) = common.h {
        config.grid.h = h;
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    config.skip.extend_from_slice(extra_skip);
    Ok(Scenario::resolve(&config)?)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let scenario = resolve(&args, Mode::Simulate, &[])?;
            let summary = cmd_simulate(&scenario)?;
            println!(
                "simulate: total cost {:.6e}, artifacts in {}",
                summary.total_cost,
                scenario.output_dir.display()
            );
            Ok(())
        }
        Command::Optimize(args) => {
            let scenario = resolve(&args, Mode::Optimize, &[])?;
            let comparison = cmd_optimize(&scenario)?;
            println!(
                "optimize: cost {:.6e} (zero-control baseline {:.6e}), artifacts in {}",
                comparison.optimized.total_cost,
                comparison.zero_control.total_cost,
                scenario.output_dir.display()
            );
            Ok(())
        }
        Command::Verify(args) => {
            let scenario = resolve(&args.common, Mode::Verify, &args.skip)?;
            let report = cmd_verify(&scenario)?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            println!(
                "verify: {}/{} checks passed, verify.json in {}",
                report.checks.len() - failed,
                report.checks.len(),
                scenario.output_dir.display()
            );
            if failed > 0 {
                return Err(CliError::Verification {
                    failed,
                    total: report.checks.len(),
                });
            }
            Ok(())
        }
    }
}

/// Simulation summary written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub final_state: State,
    pub total_cost: f64,
    pub peak_x3: f64,
    pub peak_x3_week: f64,
}

/// One side of `comparison.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSide {
    pub total_cost: f64,
    /// Week x2 falls below 1% of x2(0); null if never.
    pub x2_below_1pct_week: Option<f64>,
    /// Week x1 falls below 1% of x1(0); null if never.
    pub x1_below_1pct_week: Option<f64>,
    /// Week from which x3 is non-increasing.
    pub x3_decrease_week: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub zero_control: ComparisonSide,
    pub optimized: ComparisonSide,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::other)?;
    writeln!(w)?;
    Ok(())
}

fn write_trajectory(dir: &Path, name: &str, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    traj.write_csv(&mut w).map_err(|e| match e {
        SimError::Io(io) => CliError::Io(io),
        other => CliError::Solver(other.to_string()),
    })?;
    Ok(())
}

fn comparison_side(traj: &Trajectory) -> ComparisonSide {
    let grid = traj.grid();
    let times: Vec<f64> = (0..=grid.n_steps()).map(|i| grid.node_time(i)).collect();
    let x1: Vec<f64> = traj.component(0).collect();
    let x2: Vec<f64> = traj.component(1).collect();
    let x3: Vec<f64> = traj.component(2).collect();
    let x3_scale = x3.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    ComparisonSide {
        total_cost: traj.total_cost,
        x2_below_1pct_week: verify::crossing_week(&times, &x2, 0.01 * x2[0]),
        x1_below_1pct_week: verify::crossing_week(&times, &x1, 0.01 * x1[0]),
        x3_decrease_week: verify::last_increase_week(&times, &x3, 1e-12 * x3_scale.max(1.0)),
    }
}

/// `simulate`: trajectory CSV plus a summary.
pub fn cmd_simulate(scenario: &Scenario) -> Result<SimulateSummary, CliError> {
    std::fs::create_dir_all(&scenario.output_dir)?;
    let model = DengueModel::new(scenario.params).map_err(ConfigError::Model)?;
    let schedule = ControlSchedule::constant(scenario.grid, &scenario.controls);
    let traj = match euler_simulate(&model, &scenario.initial.to_array(), &schedule) {
        Ok(traj) => traj,
        Err(SimError::Divergence { step, component, value }) => {
            // Retain the partial trajectory up to the last finite step.
            if step > 1 {
                let partial_grid = TimeGrid::new(scenario.grid.t0(), scenario.grid.h(), step - 1)
                    .map_err(CliError::Diverged)?;
                let partial_schedule =
                    ControlSchedule::constant(partial_grid, &scenario.controls);
                if let Ok(partial) =
                    euler_simulate(&model, &scenario.initial.to_array(), &partial_schedule)
                {
                    write_trajectory(&scenario.output_dir, "trajectory.csv", &partial)?;
                }
            }
            return Err(CliError::Diverged(SimError::Divergence {
                step,
                component,
                value,
            }));
        }
        Err(e) => return Err(CliError::Diverged(e)),
    };
    write_trajectory(&scenario.output_dir, "trajectory.csv", &traj)?;

    let grid = traj.grid();
    let (mut peak, mut peak_week) = (f64::NEG_INFINITY, 0.0);
    for (i, v) in traj.component(2).enumerate() {
        if v > peak {
            peak = v;
            peak_week = grid.node_time(i);
        }
    }
    let summary = SimulateSummary {
        final_state: State::from_slice(traj.final_state()),
        total_cost: traj.total_cost,
        peak_x3: peak,
        peak_x3_week: peak_week,
    };
    write_json(&scenario.output_dir, "summary.json", &summary)?;
    Ok(summary)
}

/// `optimize`: solve the transcribed problem from the zero-control start,
/// write the optimized trajectory, report, history and comparison.
pub fn cmd_optimize(scenario: &Scenario) -> Result<Comparison, CliError> {
    std::fs::create_dir_all(&scenario.output_dir)?;
    let model = DengueModel::new(scenario.params).map_err(ConfigError::Model)?;
    let zero = ControlSchedule::zeros(scenario.grid, 2);
    let baseline = euler_simulate(&model, &scenario.initial.to_array(), &zero)
        .map_err(CliError::Diverged)?;

    let options = TranscribeOptions {
        control_bounds: if scenario.allow_negative_controls {
            ControlBounds::Free
        } else {
            ControlBounds::NonNegative
        },
        terminal_state: Vec::new(),
    };
    let problem = transcribe(model, scenario.grid, &scenario.initial.to_array(), &options)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let z0 = problem
        .pack_trajectory(&baseline)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let solution =
        solve_nlp(&problem, &z0, &scenario.solver).map_err(|e| CliError::Solver(e.to_string()))?;

    write_json(&scenario.output_dir, "report.json", &solution.report)?;
    let mut hist = BufWriter::new(File::create(scenario.output_dir.join("history.csv"))?);
    solution.report.write_history_csv(&mut hist)?;

    if solution.report.status != SolveStatus::Converged {
        return Err(CliError::Solver(format!(
            "solve ended with status {:?} (kkt {:.3e}, feasibility {:.3e}); report retained",
            solution.report.status,
            solution.report.kkt_residual,
            solution.report.feasibility_residual
        )));
    }

    let optimized = problem
        .extract_trajectory(&solution.z)
        .map_err(|e| CliError::Solver(e.to_string()))?
        .trajectory;
    write_trajectory(&scenario.output_dir, "trajectory.csv", &optimized)?;

    let comparison = Comparison {
        zero_control: comparison_side(&baseline),
        optimized: comparison_side(&optimized),
    };
    write_json(&scenario.output_dir, "comparison.json", &comparison)?;
    Ok(comparison)
}

/// `verify`: run the suite, write verify.json and the solved trajectories.
pub fn cmd_verify(scenario: &Scenario) -> Result<verify::VerifyReport, CliError> {
    std::fs::create_dir_all(&scenario.output_dir)?;
    let opts = VerifyOptions {
        skip: scenario.skip.clone(),
        break_jacobian: std::env::var("EPI_TEST_BREAK_JACOBIAN").is_ok(),
    };
    let output = run_verification(scenario, &opts);
    let mut w = BufWriter::new(File::create(scenario.output_dir.join("verify.json"))?);
    w.write_all(output.report.to_json_string().as_bytes())?;
    writeln!(w)?;
    if let Some(baseline) = &output.baseline {
        write_trajectory(&scenario.output_dir, "baseline_trajectory.csv", baseline)?;
    }
    if let Some(optimized) = &output.optimized {
        write_trajectory(&scenario.output_dir, "optimized_trajectory.csv", optimized)?;
    }
    Ok(output.report)
}
