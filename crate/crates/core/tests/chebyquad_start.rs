//! Behaviour of the Chebyquad (d = 30, p = 45) problem at the scaled start
//! `10·x_s`, which is why the shipped specs start from `x_s`.

use fdsqn::problems::{solve_reference, true_objective};
use fdsqn::solver::{run, tune_fd_sg, Method, SolverConfig, StopReason};
use fdsqn::{Error, NoiseModel, Problem};

fn scaled_start(problem: &Problem, scale: f64) -> Vec<f64> {
    problem.x_standard().iter().map(|v| scale * v).collect()
}

#[test]
fn objective_is_astronomical_at_ten_x_s() {
    let problem = Problem::chebyquad(30, 45, NoiseModel::Abs, 0.0);
    let f = true_objective(&problem, &scaled_start(&problem, 10.0));
    assert!(f > 1e130 && f.is_finite(), "F(10 x_s) = {f:e}");
    let f_s = true_objective(&problem, &problem.x_standard());
    assert!(f_s < 1.0, "F(x_s) = {f_s}");
}

#[test]
fn every_sg_steplength_diverges_from_ten_x_s() {
    let problem = Problem::chebyquad(30, 45, NoiseModel::Abs, 1e-3);
    let base = SolverConfig::new(Method::FdSg).with_s0(64).with_sg_alpha(1.0);
    match tune_fd_sg(&problem, &scaled_start(&problem, 10.0), &base, 10_000_000) {
        Err(Error::AllTrialsDiverged { .. }) => {}
        other => panic!("expected every trial to diverge, got {other:?}"),
    }
}

#[test]
fn default_line_search_fails_on_first_step_from_ten_x_s() {
    let problem = Problem::chebyquad(30, 45, NoiseModel::Abs, 1e-3);
    let cfg = SolverConfig::new(Method::FdNorm).with_s0(64).with_max_evals(10_000_000);
    let res = run(&problem, &scaled_start(&problem, 10.0), &cfg).unwrap();
    assert_eq!(res.stop_reason, StopReason::LineSearchFailure);
    assert_eq!(res.records.len(), 1);
}

#[test]
fn reference_from_x_s_matches_published_value() {
    let problem = Problem::chebyquad(30, 45, NoiseModel::Abs, 0.0);
    let reference = solve_reference(&problem).unwrap();
    assert!(reference.converged);
    assert!((reference.f_star - 0.0174).abs() < 5e-4);
}
