//! Derivative-free stochastic quasi-Newton optimization.
//!
//! `fdsqn` minimizes `F(x) = E[f(x, ζ)]` when only realizations `f(x, ζᵢ)` are
//! available. Gradients are estimated by forward differences under common
//! random numbers (every difference for a sample uses the same `ζᵢ`), an
//! L-BFGS operator scales the step, and the batch size `|S_k|` is grown by
//! either a finite-difference norm test or an inner-product quasi-Newton
//! test. A fixed-batch, fixed-step finite-difference stochastic gradient
//! method (FD-SG) and its steplength tuner are included as the baseline.
//!
//! The crate is organised by stage of the iteration:
//!
//! - [`oracle`]: seed-indexed noise, stochastic evaluations, FD gradients, eval accounting
//! - [`problems`]: Chebyquad residuals, noise models, reference solve for `F*`
//! - [`sampling`]: practical norm / IPQN tests and the batch growth rule
//! - [`lbfgs`]: two-loop recursion and curvature-pair memory with the skip rule
//! - [`linesearch`]: initial steplength heuristic and stochastic backtracking
//! - [`solver`]: FD-Norm / FD-IPQN / FD-SG drivers and telemetry
//! - [`experiment`]: spec files, per-cell CSV output, manifests and reports
//!
//! ```
//! use fdsqn::problems::Quadratic;
//! use fdsqn::solver::{run_adaptive, Method, SolverConfig};
//!
//! let problem = Quadratic::identity(2);
//! let cfg = SolverConfig::new(Method::FdNorm).with_s0(1).with_max_evals(10_000);
//! let result = run_adaptive(&problem, &[4.0, 3.0], &cfg).unwrap();
//! let last = result.records.last().unwrap();
//! assert!(last.f_true < 1e-12);
//! ```

pub mod error;
pub mod experiment;
pub mod lbfgs;
pub(crate) mod linalg;
pub mod linesearch;
pub mod oracle;
pub mod problems;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use oracle::{Batch, CrnSample, GradientEstimate, Objective, Oracle};
pub use problems::{Chebyquad, NoiseModel, Problem};
pub use solver::{Method, RunResult, SolverConfig, StopReason};

/// Version string recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
