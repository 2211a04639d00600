// Scratch probe for solver behavior; not part of the deliverable surface.
use epi_traj_opt::config::{Scenario, ScenarioConfig};
use epi_traj_opt::integrator::{euler_simulate, ControlSchedule};
use epi_traj_opt::model::DengueModel;
use epi_traj_opt::nlp::NlpProblem;
use epi_traj_opt::solver::shooting::{solve_shooting, ShootingOptions};
use epi_traj_opt::solver::solve_nlp;
use epi_traj_opt::transcription::{transcribe, TranscribeOptions};
use epi_traj_opt::verify;

fn main() {
    let mut scenario = Scenario::resolve(&ScenarioConfig::default()).unwrap();
    if let Ok(cap) = std::env::var("PROBE_MAX_INNER") {
        scenario.solver.max_inner = cap.parse().unwrap();
    }
    if let Ok(cap) = std::env::var("PROBE_MAX_OUTER") {
        scenario.solver.max_outer = cap.parse().unwrap();
    }
    let model = DengueModel::new(scenario.params).unwrap();
    let zero = ControlSchedule::zeros(scenario.grid, 2);
    let baseline = euler_simulate(&model, &scenario.initial.to_array(), &zero).unwrap();
    println!("baseline cost: {:.9e}", baseline.total_cost);

    let t0 = std::time::Instant::now();
    let problem = transcribe(
        model.clone(),
        scenario.grid,
        &scenario.initial.to_array(),
        &TranscribeOptions::default(),
    )
    .unwrap();
    let z0 = problem.pack_trajectory(&baseline).unwrap();
    let sol = solve_nlp(&problem, &z0, &scenario.solver).unwrap();
    println!(
        "NLP: status {:?} obj {:.9e} kkt {:.3e} feas {:.3e} outers {} inners {} in {:.2}s",
        sol.report.status,
        sol.report.objective,
        sol.report.kkt_residual,
        sol.report.feasibility_residual,
        sol.report.outer_iterations,
        sol.report.inner_iterations,
        t0.elapsed().as_secs_f64()
    );
    for rec in sol.report.history.iter().rev().take(1) {
        println!(
            "last history row: outer {} inner {} merit {:.6e} feas {:.3e} kkt {:.3e} rho {:.1e}",
            rec.outer, rec.inner, rec.merit, rec.feasibility, rec.kkt, rec.penalty
        );
    }
    // Per-outer summary.
    let mut by_outer: Vec<(usize, usize, f64, f64, f64)> = Vec::new();
    for r in &sol.report.history {
        if by_outer.last().map(|x| x.0) != Some(r.outer) {
            by_outer.push((r.outer, 0, 0.0, 0.0, 0.0));
        }
        if let Some(last) = by_outer.last_mut() {
            last.1 = r.inner;
            last.2 = r.feasibility;
            last.3 = r.kkt;
            last.4 = r.penalty;
        }
    }
    for (outer, inners, feas, kkt, rho) in &by_outer {
        println!("  outer {outer}: {inners} inners, feas {feas:.3e}, kkt {kkt:.3e}, rho {rho:.1e}");
    }

    let t1 = std::time::Instant::now();
    let shot = solve_shooting(
        &model,
        &scenario.grid,
        &scenario.initial.to_array(),
        &zero,
        &ShootingOptions::default(),
        &scenario.solver,
    )
    .unwrap();
    println!(
        "shooting: status {:?} cost {:.9e} kkt {:.3e} iters {} in {:.2}s",
        shot.report.status,
        shot.cost,
        shot.report.kkt_residual,
        shot.report.inner_iterations,
        t1.elapsed().as_secs_f64()
    );
    println!(
        "rel gap: {:.3e}",
        (sol.report.objective - shot.cost).abs() / sol.report.objective.abs()
    );

    // Milestones from the NLP trajectory.
    let traj = problem.extract_trajectory(&sol.z).unwrap().trajectory;
    let times: Vec<f64> = (0..=scenario.grid.n_steps())
        .map(|i| scenario.grid.node_time(i))
        .collect();
    let x1: Vec<f64> = traj.component(0).collect();
    let x2: Vec<f64> = traj.component(1).collect();
    let x3: Vec<f64> = traj.component(2).collect();
    println!(
        "x2 < 1% at {:?}, x1 < 1% at {:?}, x3 peak week {:.2}, u1 early frac {:.3}",
        verify::crossing_week(&times, &x2, 0.01 * x2[0]),
        verify::crossing_week(&times, &x1, 0.01 * x1[0]),
        verify::last_increase_week(&times, &x3, 1e-12),
        verify::early_integral_fraction(traj.controls(), 0, 8.0)
    );
    println!("final state: {:?}", traj.final_state());
    let u1_max = traj
        .controls()
        .as_flat()
        .chunks(2)
        .map(|c| c[0])
        .fold(0.0_f64, f64::max);
    let u2_max = traj
        .controls()
        .as_flat()
        .chunks(2)
        .map(|c| c[1])
        .fold(0.0_f64, f64::max);
    println!("u1 max {u1_max:.4}, u2 max {u2_max:.4}");
    let mins = traj.states_flat().iter().cloned().fold(f64::INFINITY, f64::min);
    println!("min state value anywhere: {mins:.4e}");
}
