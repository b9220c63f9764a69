//! Common random numbers: the same sample id always yields the same noise, so
//! forward differences taken with one `ζᵢ` cancel the noise exactly.
//!
//! Run with `cargo run --example crn_oracle`.

use fdsqn::problems::true_objective;
use fdsqn::{Batch, CrnSample, NoiseModel, Oracle, Problem};

fn main() -> fdsqn::Result<()> {
    let problem = Problem::chebyquad(6, 8, NoiseModel::Abs, 1e-3);
    let oracle = Oracle::new(&problem, 42);
    let x = problem.x_standard();

    let a = oracle.eval_f(&x, CrnSample { id: 7 })?;
    let b = oracle.eval_f(&x, CrnSample { id: 7 })?;
    let c = oracle.eval_f(&x, CrnSample { id: 8 })?;
    println!("f(x, z7) = {a:.12}  (again: {b:.12})");
    println!("f(x, z8) = {c:.12}");
    println!("F(x)     = {:.12}  (noise-free, logging only)", true_objective(&problem, &x));

    let batch = Batch::consecutive(0, 32);
    let before = oracle.evals();
    let est = oracle.fd_gradient_batch(&x, 1e-8, &batch)?;
    let exact = problem.exact_gradient(&x).expect("chebyquad has a jacobian");
    let gap = est
        .batch_gradient
        .iter()
        .zip(&exact)
        .map(|(g, e)| (g - e).powi(2))
        .sum::<f64>()
        .sqrt();
    println!(
        "\n|S| = {}: {} evaluations, sample variance {:.3e}, |g_S - grad F| = {gap:.3e}",
        batch.len(),
        oracle.evals() - before,
        est.sample_variance
    );
    Ok(())
}
