//! FD-Norm and FD-IPQN against a tuned FD-SG baseline on a small noisy
//! Chebyquad instance, all at the same evaluation budget.
//!
//! Run with `cargo run --release --example adaptive_vs_sgd`.

use fdsqn::problems::solve_reference;
use fdsqn::solver::{run, tune_fd_sg};
use fdsqn::{Method, NoiseModel, Problem, SolverConfig};

fn main() -> fdsqn::Result<()> {
    let budget = 1_000_000;
    let clean = Problem::chebyquad(10, 15, NoiseModel::Abs, 0.0);
    let f_star = solve_reference(&clean)?.f_star;
    let problem = Problem::chebyquad(10, 15, NoiseModel::Abs, 1e-3).with_f_star(f_star);
    let x0 = problem.x_standard();

    let base = SolverConfig::new(Method::FdSg).with_s0(64).with_sg_alpha(1.0);
    let tuned = tune_fd_sg(&problem, &x0, &base, budget)?;
    println!("FD-SG tuned alpha = 2^{} over {} trials", tuned.best_j, tuned.trials.len());

    let configs = [
        SolverConfig::new(Method::FdNorm).with_s0(64),
        SolverConfig::new(Method::FdIpqn).with_s0(64),
        base.with_sg_alpha(tuned.best_alpha),
    ];
    println!("{:<8} {:>6} {:>8} {:>10} {:>12}", "method", "iters", "last |S|", "evals", "F - F*");
    for cfg in configs {
        let method = cfg.method;
        let res = run(&problem, &x0, &cfg.with_max_evals(budget).with_seed(3))?;
        let last = res.records.last().expect("at least one iteration");
        println!(
            "{:<8} {:>6} {:>8} {:>10} {:>12.3e}",
            method.as_str(),
            res.records.len(),
            last.batch_size,
            res.evals,
            last.err
        );
    }
    Ok(())
}
