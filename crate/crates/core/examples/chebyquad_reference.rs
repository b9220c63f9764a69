//! Noise-free reference solve for Chebyquad, which supplies `F*` for error
//! curves.
//!
//! Run with `cargo run --release --example chebyquad_reference [d] [p]`.

use std::time::Instant;

use fdsqn::problems::{solve_reference, true_objective};
use fdsqn::{NoiseModel, Problem};

fn main() -> fdsqn::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let d = args.next().unwrap_or(30);
    let p = args.next().unwrap_or(45);
    let problem = Problem::chebyquad(d, p, NoiseModel::Abs, 0.0);
    let x_s = problem.x_standard();
    println!("chebyquad d={d} p={p}: F(x_s) = {:.6}", true_objective(&problem, &x_s));

    let started = Instant::now();
    let reference = solve_reference(&problem)?;
    println!(
        "F* = {:.12} after {} iterations, |grad|_inf = {:.2e}, converged = {}, {:.1?}",
        reference.f_star,
        reference.iterations,
        reference.grad_inf_norm,
        reference.converged,
        started.elapsed()
    );
    let head: Vec<String> = reference.x.iter().take(6).map(|v| format!("{v:.4}")).collect();
    println!("x* starts [{}, ...]", head.join(", "));
    Ok(())
}
