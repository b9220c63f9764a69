//! Plugging a user-defined stochastic function into the solver. Only
//! `Objective::value` is required; the solver never sees gradients.
//!
//! Run with `cargo run --release --example custom_objective`.

use fdsqn::{Method, Objective, SolverConfig};

/// Rosenbrock with multiplicative noise on each term.
struct NoisyRosenbrock {
    sigma: f64,
}

impl Objective for NoisyRosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, x: &[f64], zeta: &[f64]) -> f64 {
        let a = 10.0 * (x[1] - x[0] * x[0]);
        let b = 1.0 - x[0];
        (a * a * (1.0 + zeta[0]) + b * b * (1.0 + zeta[1])) / 2.0
    }

    fn expected_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.value(x, &[0.0, 0.0]))
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

fn main() -> fdsqn::Result<()> {
    let problem = NoisyRosenbrock { sigma: 0.05 };
    let cfg = SolverConfig::new(Method::FdNorm).with_s0(4).with_max_evals(200_000).with_seed(5);
    let res = fdsqn::solver::run(&problem, &[-1.2, 1.0], &cfg)?;
    for r in res.records.iter().step_by(10) {
        println!("k={:>3} |S|={:>5} alpha={:.3e} F={:.3e}", r.k, r.batch_size, r.alpha, r.f_true);
    }
    println!("stopped: {:?}, x = {:.6?}", res.stop_reason, res.final_x);
    Ok(())
}
