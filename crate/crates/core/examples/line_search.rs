//! Variance-shrunk initial steplength and stochastic backtracking on a batch.
//!
//! Run with `cargo run --example line_search`.

use fdsqn::linesearch::{backtrack, fd_parameter, initial_steplength, LineSearchConfig};
use fdsqn::problems::Quadratic;
use fdsqn::{Batch, Oracle};

fn main() -> fdsqn::Result<()> {
    let problem = Quadratic::diagonal(&[1.0, 10.0, 100.0]).with_sigma(100.0);
    let oracle = Oracle::new(&problem, 9);
    let x = [1.0, 1.0, 1.0];
    let nu = fd_parameter(f64::EPSILON, 100.0);
    println!("nu* for L = 100: {nu:.3e}");

    for n in [2, 32, 512] {
        let rb = oracle.realize(&Batch::consecutive(0, n));
        let est = oracle.gradient(&x, nu, &rb)?;
        let init = initial_steplength(&est, n);
        // steepest descent on the sampled function
        let g = est.batch_gradient.clone();
        let res = backtrack(&oracle, &x, &g, &g, &rb, est.sampled_value(), init.alpha, &LineSearchConfig::default());
        println!(
            "|S| = {n:>3}: alpha_hat = {:.4}, accepted alpha = {:.3e} after {} trials, F_S {:.4} -> {:.4}",
            init.alpha,
            res.alpha,
            res.trial_count,
            est.sampled_value(),
            res.f_new
        );
    }
    Ok(())
}
