//! FD-Norm / FD-IPQN adaptive quasi-Newton iterations and the FD-SG baseline.
//!
//! One adaptive iteration `k`:
//!
//! 1. realize the batch `S_k` and form `g = ∇F_{S_k}^FD(x_k)` (`(d+1)|S_k|` evals)
//! 2. `p = H_k g`; run the configured sample-size test, which sets `|S_{k+1}|`
//! 3. backtrack from `min(α̂_k, alpha_max)` on `F_{S_k}` (`|S_k|` evals per trial)
//! 4. on acceptance, `y_k = ∇F_{S_k}^FD(x_{k+1}) - g` on the same batch, reusing
//!    the accepted trial's values as the base (`d|S_k|` evals), then `try_update`
//!
//! `f_true` and `err` in the telemetry come from [`Objective::expected_value`],
//! which the iteration itself never reads.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::{LbfgsMemory, DEFAULT_BETA, DEFAULT_MEMORY};
use crate::linalg::{self, all_finite, norm};
use crate::linesearch::{backtrack, initial_steplength, LineSearchConfig};
use crate::oracle::{Objective, Oracle};
use crate::sampling::{ipqn_test, next_batch, norm_test, SampleIds, SampleSizePolicy, TestKind, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FdNorm,
    FdIpqn,
    FdSg,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FdNorm => "fd_norm",
            Method::FdIpqn => "fd_ipqn",
            Method::FdSg => "fd_sg",
        }
    }

    pub fn is_adaptive(self) -> bool {
        self != Method::FdSg
    }

    fn default_test(self) -> TestKind {
        match self {
            Method::FdIpqn => TestKind::Ipqn,
            Method::FdNorm | Method::FdSg => TestKind::Norm,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fd_norm" => Ok(Method::FdNorm),
            "fd_ipqn" => Ok(Method::FdIpqn),
            "fd_sg" => Ok(Method::FdSg),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// What to do when the stochastic line search fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsFailurePolicy {
    /// terminate the run
    Stop,
    /// keep `x_k` and continue with the next batch
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// finite-difference interval `ν`
    pub nu: f64,
    pub policy: SampleSizePolicy,
    pub ls: LineSearchConfig,
    pub ls_failure_policy: LsFailurePolicy,
    pub lbfgs_m: usize,
    /// curvature threshold of the skip rule
    pub beta: f64,
    pub gamma_init: f64,
    pub max_evals: u64,
    pub max_iters: Option<usize>,
    pub master_seed: u64,
    /// constant steplength of FD-SG
    pub sg_alpha: Option<f64>,
}

impl SolverConfig {
    /// Defaults: `θ = 0.9`, `ν = 1e-8`, `m = 10`, `β = 1e-2`, `c1 = 1e-4`,
    /// `τ = 0.5`, `|S_0| = 2`, budget `1e7` evaluations.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            nu: 1e-8,
            policy: SampleSizePolicy {
                test: method.default_test(),
                ..Default::default()
            },
            ls: LineSearchConfig::default(),
            ls_failure_policy: LsFailurePolicy::Stop,
            lbfgs_m: DEFAULT_MEMORY,
            beta: DEFAULT_BETA,
            gamma_init: 1.0,
            max_evals: 10_000_000,
            max_iters: None,
            master_seed: 0,
            sg_alpha: None,
        }
    }

    pub fn with_s0(mut self, s0: usize) -> Self {
        self.policy.s0 = s0;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_max_evals(mut self, max_evals: u64) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = Some(max_iters);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_sg_alpha(mut self, alpha: f64) -> Self {
        self.sg_alpha = Some(alpha);
        self
    }

    pub fn with_ls_failure_policy(mut self, policy: LsFailurePolicy) -> Self {
        self.ls_failure_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::InvalidConfig(format!("nu = {} must be positive", self.nu)));
        }
        self.policy.validate()?;
        self.ls.validate()?;
        if self.lbfgs_m == 0 {
            return Err(Error::InvalidConfig("lbfgs memory m must be positive".into()));
        }
        if !(self.beta >= 0.0) || !(self.gamma_init > 0.0) {
            return Err(Error::InvalidConfig("beta must be >= 0 and gamma_init > 0".into()));
        }
        if self.method == Method::FdSg {
            match self.sg_alpha {
                Some(a) if a > 0.0 && a.is_finite() => {}
                Some(a) => return Err(Error::InvalidConfig(format!("sg_alpha = {a} must be positive"))),
                None => return Err(Error::InvalidConfig("fd_sg requires sg_alpha".into())),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Accepted,
    Failed,
    /// no line search (FD-SG)
    None,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Accepted => "accepted",
            StepStatus::Failed => "failed",
            StepStatus::None => "none",
        }
    }
}

impl FromStr for StepStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accepted" => Ok(StepStatus::Accepted),
            "failed" => Ok(StepStatus::Failed),
            "none" => Ok(StepStatus::None),
            other => Err(Error::InvalidConfig(format!("unknown line-search status `{other}`"))),
        }
    }
}

/// Telemetry for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub batch_size: usize,
    /// accepted steplength; 0 when the line search failed
    pub alpha: f64,
    /// `F_{S_k}(x_k)`
    pub f_sampled: f64,
    /// `F(x_{k+1})`
    pub f_true: f64,
    /// `F(x_{k+1}) - F*`, NaN when `F*` is unknown
    pub err: f64,
    /// `‖∇F_{S_k}^FD(x_k)‖`
    pub grad_norm_est: f64,
    pub test_passed: bool,
    pub ls_status: StepStatus,
    pub cum_evals: u64,
    pub ls_trials: u32,
    /// `F_{S_k}(x_{k+1})` on acceptance
    pub f_sampled_new: f64,
    /// `gᵀ H_k g`
    pub slope: f64,
    pub batch_ids: Range<u64>,
    /// ids used for `y_k`; `None` when no curvature gradient was computed
    pub curvature_ids: Option<Range<u64>>,
    pub curvature_accepted: bool,
    /// the next batch size was capped at `s_max`
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    LineSearchFailure,
    GradientDegenerate,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub final_x: Vec<f64>,
    pub evals: u64,
}

impl RunResult {
    /// `F` at the final iterate, or at `x0` when no iteration completed.
    pub fn final_f_true<O: Objective + ?Sized>(&self, objective: &O) -> f64 {
        self.records
            .last()
            .map(|r| r.f_true)
            .unwrap_or_else(|| objective.expected_value(&self.final_x).unwrap_or(f64::NAN))
    }
}

fn truth<O: Objective + ?Sized>(objective: &O, x: &[f64]) -> (f64, f64) {
    let f_true = objective.expected_value(x).unwrap_or(f64::NAN);
    let err = objective.optimal_value().map_or(f64::NAN, |fs| f_true - fs);
    (f_true, err)
}

/// Dispatches on `cfg.method`.
pub fn run<O: Objective + ?Sized>(objective: &O, x0: &[f64], cfg: &SolverConfig) -> Result<RunResult> {
    if cfg.method.is_adaptive() {
        run_adaptive(objective, x0, cfg)
    } else {
        run_fd_sg(objective, x0, cfg)
    }
}

/// Adaptive-sampling finite-difference L-BFGS (FD-Norm or FD-IPQN).
pub fn run_adaptive<O: Objective + ?Sized>(objective: &O, x0: &[f64], cfg: &SolverConfig) -> Result<RunResult> {
    cfg.validate()?;
    if !cfg.method.is_adaptive() {
        return Err(Error::InvalidConfig("run_adaptive needs fd_norm or fd_ipqn".into()));
    }
    let d = objective.dim();
    if x0.len() != d {
        return Err(Error::InvalidConfig(format!("x0 has length {}, expected {d}", x0.len())));
    }
    let oracle = Oracle::new(objective, cfg.master_seed);
    let policy = cfg.policy;
    let mut memory = LbfgsMemory::new(cfg.lbfgs_m).with_gamma_init(cfg.gamma_init);
    let mut ids = SampleIds::default();
    let mut batch = policy.initial_batch(&mut ids);
    let mut x = x0.to_vec();
    let mut records = Vec::new();

    let stop_reason = loop {
        let k = records.len();
        if cfg.max_iters.is_some_and(|m| k >= m) {
            break StopReason::MaxIters;
        }
        let n = batch.len();
        let evals_before = oracle.evals();
        if evals_before + ((d + 1) * n) as u64 > cfg.max_evals {
            break StopReason::Budget;
        }

        let rb = oracle.realize(&batch);
        let est = match oracle.gradient(&x, cfg.nu, &rb) {
            Ok(est) => est,
            Err(Error::NonFiniteValue { .. }) => break StopReason::Diverged,
            Err(e) => return Err(e),
        };
        let g = &est.batch_gradient;
        let f0 = est.sampled_value();
        let grad_norm_est = norm(g);
        if grad_norm_est == 0.0 {
            break StopReason::GradientDegenerate;
        }

        let direction = memory.apply_h(g);
        let outcome = match policy.test {
            TestKind::Norm => norm_test(&est, n, policy.theta),
            TestKind::Ipqn => {
                let hhg = memory.apply_h(&direction);
                ipqn_test(&est, &direction, &hhg, n, policy.theta)
            }
            TestKind::Fixed => TestOutcome::pass(n),
        };
        let slope = linalg::dot(g, &direction);

        let alpha0 = initial_steplength(&est, n).alpha.min(cfg.ls.alpha_max);
        let ls = backtrack(&oracle, &x, &direction, g, &rb, f0, alpha0, &cfg.ls);

        let mut curvature_ids = None;
        let mut curvature_accepted = false;
        if ls.accepted() {
            let x_new = linalg::step(&x, ls.alpha, &direction);
            // full overlap: same realized batch, base values from the accepted trial
            match oracle.gradient_from_base(&x_new, cfg.nu, &rb, &ls.sample_values) {
                Ok(est_new) => {
                    curvature_ids = rb.batch.id_range();
                    let s = linalg::sub(&x_new, &x);
                    let y = linalg::sub(&est_new.batch_gradient, g);
                    curvature_accepted = memory.try_update(&s, &y, cfg.beta).unwrap_or(false);
                }
                Err(Error::NonFiniteValue { .. }) => {}
                Err(e) => return Err(e),
            }
            x = x_new;
        }

        let cum_evals = oracle.evals();
        let expected = ((d + 1) as u64 + u64::from(ls.trial_count) + if ls.accepted() { d as u64 } else { 0 }) * n as u64;
        debug_assert_eq!(cum_evals - evals_before, expected, "evaluation accounting");

        let next = next_batch(&policy, &batch, &outcome, &mut ids);
        let (f_true, err) = truth(objective, &x);
        records.push(IterationRecord {
            k,
            batch_size: n,
            alpha: if ls.accepted() { ls.alpha } else { 0.0 },
            f_sampled: f0,
            f_true,
            err,
            grad_norm_est,
            test_passed: outcome.passed,
            ls_status: if ls.accepted() { StepStatus::Accepted } else { StepStatus::Failed },
            cum_evals,
            ls_trials: ls.trial_count,
            f_sampled_new: ls.f_new,
            slope,
            batch_ids: rb.batch.id_range().expect("solver batches are consecutive"),
            curvature_ids,
            curvature_accepted,
            saturated: next.saturated,
        });
        if !ls.accepted() && cfg.ls_failure_policy == LsFailurePolicy::Stop {
            break StopReason::LineSearchFailure;
        }
        batch = next.batch;
    };

    Ok(RunResult {
        records,
        stop_reason,
        final_x: x,
        evals: oracle.evals(),
    })
}

/// Fixed-batch, fixed-steplength finite-difference stochastic gradient descent.
pub fn run_fd_sg<O: Objective + ?Sized>(objective: &O, x0: &[f64], cfg: &SolverConfig) -> Result<RunResult> {
    cfg.validate()?;
    let alpha = match (cfg.method, cfg.sg_alpha) {
        (Method::FdSg, Some(a)) => a,
        _ => return Err(Error::InvalidConfig("run_fd_sg needs method fd_sg with sg_alpha".into())),
    };
    let d = objective.dim();
    if x0.len() != d {
        return Err(Error::InvalidConfig(format!("x0 has length {}, expected {d}", x0.len())));
    }
    let oracle = Oracle::new(objective, cfg.master_seed);
    let n = cfg.policy.s0;
    let mut ids = SampleIds::default();
    let mut x = x0.to_vec();
    let mut records = Vec::new();

    let stop_reason = loop {
        let k = records.len();
        if cfg.max_iters.is_some_and(|m| k >= m) {
            break StopReason::MaxIters;
        }
        if oracle.evals() + ((d + 1) * n) as u64 > cfg.max_evals {
            break StopReason::Budget;
        }
        let rb = oracle.realize(&ids.take(n));
        let est = match oracle.gradient(&x, cfg.nu, &rb) {
            Ok(est) => est,
            Err(Error::NonFiniteValue { .. }) => break StopReason::Diverged,
            Err(e) => return Err(e),
        };
        let g = &est.batch_gradient;
        let x_new = linalg::step(&x, alpha, g);
        let (f_true, err) = truth(objective, &x_new);
        if !all_finite(&x_new) || !all_finite(g) || (objective.expected_value(&x_new).is_some() && !f_true.is_finite()) {
            break StopReason::Diverged;
        }
        records.push(IterationRecord {
            k,
            batch_size: n,
            alpha,
            f_sampled: est.sampled_value(),
            f_true,
            err,
            grad_norm_est: norm(g),
            test_passed: true,
            ls_status: StepStatus::None,
            cum_evals: oracle.evals(),
            ls_trials: 0,
            f_sampled_new: f64::NAN,
            slope: linalg::norm_sq(g),
            batch_ids: rb.batch.id_range().expect("solver batches are consecutive"),
            curvature_ids: None,
            curvature_accepted: false,
            saturated: false,
        });
        x = x_new;
    };

    Ok(RunResult {
        records,
        stop_reason,
        final_x: x,
        evals: oracle.evals(),
    })
}

/// Exponents `j` of the FD-SG steplength grid `α = 2ʲ`.
pub const SG_GRID: std::ops::RangeInclusive<i32> = -20..=10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrial {
    pub j: i32,
    pub alpha: f64,
    /// `F` at the last iterate; `+inf` for diverged runs
    pub final_f_true: f64,
    pub final_err: f64,
    pub stop_reason: StopReason,
    pub evals: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_alpha: f64,
    pub best_j: i32,
    pub trials: Vec<TuneTrial>,
}

/// Runs FD-SG for every `α = 2ʲ`, `j = -20..=10`, with the same seed and
/// budget, and picks the α with the smallest final `F` (ties go to the
/// smaller α).
pub fn tune_fd_sg<O: Objective + ?Sized>(
    objective: &O,
    x0: &[f64],
    base: &SolverConfig,
    budget_per_trial: u64,
) -> Result<TuneResult> {
    let d = objective.dim() as u64;
    if budget_per_trial < (d + 1) * base.policy.s0 as u64 {
        return Err(Error::InvalidConfig(format!(
            "tuning budget {budget_per_trial} is below one gradient ({} evals)",
            (d + 1) * base.policy.s0 as u64
        )));
    }
    let optimum = objective.optimal_value();
    let mut trials = Vec::with_capacity(SG_GRID.count());
    for j in SG_GRID {
        let alpha = 2f64.powi(j);
        let cfg = SolverConfig {
            method: Method::FdSg,
            sg_alpha: Some(alpha),
            max_evals: budget_per_trial,
            ..base.clone()
        };
        let res = run_fd_sg(objective, x0, &cfg)?;
        let final_f_true = if res.stop_reason == StopReason::Diverged {
            f64::INFINITY
        } else {
            res.final_f_true(objective)
        };
        trials.push(TuneTrial {
            j,
            alpha,
            final_f_true,
            final_err: optimum.map_or(f64::NAN, |fs| final_f_true - fs),
            stop_reason: res.stop_reason,
            evals: res.evals,
            iterations: res.records.len(),
        });
    }
    let best = trials
        .iter()
        .filter(|t| t.final_f_true.is_finite())
        .fold(None::<&TuneTrial>, |best, t| match best {
            Some(b) if b.final_f_true <= t.final_f_true => Some(b),
            _ => Some(t),
        })
        .ok_or_else(|| Error::AllTrialsDiverged {
            problem: objective.label(),
        })?;
    Ok(TuneResult {
        best_alpha: best.alpha,
        best_j: best.j,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;

    #[test]
    fn noise_free_quadratic_converges_with_fixed_batch() {
        let q = Quadratic::identity(2);
        for method in [Method::FdNorm, Method::FdIpqn] {
            let cfg = SolverConfig::new(method).with_max_iters(30);
            let res = run_adaptive(&q, &[4.0, 3.0], &cfg).unwrap();
            assert!(res.records.iter().all(|r| r.batch_size == 2), "{method}");
            assert!(norm(&res.final_x) <= 1e-6, "{method}: {:?}", res.final_x);
        }
    }

    #[test]
    fn tiny_budget_takes_no_steps() {
        let q = Quadratic::identity(3);
        let cfg = SolverConfig::new(Method::FdNorm).with_s0(4).with_max_evals(15);
        let res = run_adaptive(&q, &[1.0, 1.0, 1.0], &cfg).unwrap();
        assert_eq!(res.stop_reason, StopReason::Budget);
        assert!(res.records.is_empty());
        assert_eq!(res.evals, 0);
        assert_eq!(res.final_x, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn sg_follows_closed_form_on_quadratic() {
        let q = Quadratic::identity(2);
        let nu = 1e-8;
        let cfg = SolverConfig::new(Method::FdSg).with_sg_alpha(0.5).with_nu(nu).with_max_iters(5);
        let x0 = [2.0, -1.0];
        let res = run_fd_sg(&q, &x0, &cfg).unwrap();
        // FD gradient of ½‖x‖² is x + ν/2, so x_{k+1} = 0.5 x_k - ν/4.
        let mut x = x0.to_vec();
        for _ in 0..5 {
            x.iter_mut().for_each(|v| *v = 0.5 * *v - 0.25 * nu);
        }
        for (a, b) in res.final_x.iter().zip(&x) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn sg_requires_alpha() {
        let q = Quadratic::identity(2);
        let err = run_fd_sg(&q, &[1.0, 1.0], &SolverConfig::new(Method::FdSg)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn tuning_on_noise_free_quadratic_prefers_unit_step() {
        let q = Quadratic::identity(2);
        let base = SolverConfig::new(Method::FdSg).with_s0(1).with_max_iters(1);
        let res = tune_fd_sg(&q, &[3.0, -2.0], &base, 1_000).unwrap();
        assert_eq!(res.trials.len(), 31);
        assert_eq!(res.best_j, 0);
        let best = res.trials.iter().find(|t| t.j == res.best_j).unwrap();
        assert!(res.trials.iter().all(|t| best.final_f_true <= t.final_f_true));
    }
}
