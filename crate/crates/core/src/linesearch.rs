//! Stochastic backtracking line search and steplength/FD-parameter rules.
//!
//! The sufficient-decrease test is evaluated on the sampled function `F_S`
//! over the same batch that produced the gradient, so noise common to both
//! sides of the comparison cancels:
//!
//! ```text
//! F_S(x - α H g) <= F_S(x) - c1 α gᵀ H g
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{mean, GradientEstimate, NoiseSource, Objective, Oracle, RealizedBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    /// sufficient-decrease constant `c1`
    pub c1: f64,
    /// backtracking factor `τ`
    pub tau: f64,
    /// maximum number of trial steplengths
    pub max_backtracks: u32,
    /// cap on the initial trial steplength
    pub alpha_max: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            tau: 0.5,
            max_backtracks: 30,
            alpha_max: 1.0,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::InvalidConfig(format!("c1 = {} not in (0, 1)", self.c1)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!("tau = {} not in (0, 1)", self.tau)));
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidConfig("max_backtracks must be positive".into()));
        }
        if !(self.alpha_max > 0.0) {
            return Err(Error::InvalidConfig("alpha_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearchStatus {
    Accepted,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub status: LineSearchStatus,
    /// accepted steplength, or the last one tried on failure
    pub alpha: f64,
    pub trial_count: u32,
    /// `F_S` at the accepted point (at the last trial on failure)
    pub f_new: f64,
    /// per-sample values `f(x_new, ζᵢ)` at the accepted point
    pub sample_values: Vec<f64>,
}

impl LineSearchResult {
    pub fn accepted(&self) -> bool {
        self.status == LineSearchStatus::Accepted
    }
}

/// Variance-shrunk initial steplength `(1 + Var / (|S| ‖g‖²))⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStep {
    pub alpha: f64,
    /// set when `‖g‖ = 0`; `alpha` is then 1
    pub degenerate: bool,
}

pub fn initial_steplength(estimate: &GradientEstimate, batch_size: usize) -> InitialStep {
    steplength_from_moments(
        estimate.sample_variance,
        batch_size,
        linalg::norm_sq(&estimate.batch_gradient),
    )
}

pub fn steplength_from_moments(variance: f64, batch_size: usize, grad_norm_sq: f64) -> InitialStep {
    if grad_norm_sq == 0.0 {
        return InitialStep {
            alpha: 1.0,
            degenerate: true,
        };
    }
    let ratio = variance / (batch_size as f64 * grad_norm_sq);
    InitialStep {
        alpha: 1.0 / (1.0 + ratio),
        degenerate: false,
    }
}

/// Finite-difference interval `2 sqrt(ε_m / L)` minimising the bound on
/// truncation plus rounding error.
pub fn fd_parameter(eps_m: f64, lipschitz: f64) -> f64 {
    assert!(eps_m > 0.0 && lipschitz > 0.0, "eps_m and L must be positive");
    2.0 * (eps_m / lipschitz).sqrt()
}

/// Outcome of the generic Armijo loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOutcome {
    pub status: LineSearchStatus,
    pub alpha: f64,
    pub trial_count: u32,
    pub f_new: f64,
}

/// Armijo backtracking over an arbitrary trial function.
///
/// `trial(α)` returns the function value at `x - α d`, or `None` when that
/// value is not finite (the trial is then rejected). A trial is accepted when
/// `f(α) <= f0 - c1 α slope + slack`; `slack` is zero for the stochastic
/// search and a few ulps of `|f0|` for the noise-free reference solve.
pub fn armijo<F>(f0: f64, slope: f64, alpha0: f64, cfg: &LineSearchConfig, slack: f64, mut trial: F) -> ArmijoOutcome
where
    F: FnMut(f64) -> Option<f64>,
{
    let mut alpha = alpha0;
    let mut f_last = f64::NAN;
    for t in 1..=cfg.max_backtracks {
        if let Some(f) = trial(alpha) {
            f_last = f;
            if f <= f0 - cfg.c1 * alpha * slope + slack {
                return ArmijoOutcome {
                    status: LineSearchStatus::Accepted,
                    alpha,
                    trial_count: t,
                    f_new: f,
                };
            }
        }
        if t < cfg.max_backtracks {
            alpha *= cfg.tau;
        }
    }
    ArmijoOutcome {
        status: LineSearchStatus::Failed,
        alpha,
        trial_count: cfg.max_backtracks,
        f_new: f_last,
    }
}

/// Stochastic backtracking on `F_S` along `-direction`.
///
/// `f0` is `F_S(x)`, already known from the base values of the gradient, and
/// `rb` must be the batch that produced `g`. Each trial costs `|S|` evaluations.
pub fn backtrack<O, N>(
    oracle: &Oracle<'_, O, N>,
    x: &[f64],
    direction: &[f64],
    g: &[f64],
    rb: &RealizedBatch,
    f0: f64,
    alpha0: f64,
    cfg: &LineSearchConfig,
) -> LineSearchResult
where
    O: Objective + ?Sized,
    N: NoiseSource,
{
    let slope = linalg::dot(g, direction);
    let mut last_values = Vec::new();
    let outcome = armijo(f0, slope, alpha0, cfg, 0.0, |alpha| {
        let trial_x = linalg::step(x, alpha, direction);
        match oracle.batch_values(&trial_x, rb) {
            Ok(values) => {
                let f = mean(&values);
                last_values = values;
                f.is_finite().then_some(f)
            }
            Err(_) => {
                last_values.clear();
                None
            }
        }
    });
    LineSearchResult {
        status: outcome.status,
        alpha: outcome.alpha,
        trial_count: outcome.trial_count,
        f_new: outcome.f_new,
        sample_values: if outcome.status == LineSearchStatus::Accepted {
            last_values
        } else {
            Vec::new()
        },
    }
}
