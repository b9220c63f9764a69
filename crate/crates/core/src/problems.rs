//! Benchmark problems: stochastic nonlinear least squares built on a residual
//! map `φ: ℝᵈ → ℝᵖ`, the Chebyquad residuals, and a noisy quadratic used by
//! tests and examples.
//!
//! Both noise models have `E[f(x, ζ)] = Σ φⱼ²(x)` for `ζ ~ N(0, σ² I_p)`:
//!
//! ```text
//! abs: f(x, ζ) = Σ (φⱼ(x) + ζⱼ)² - p σ²
//! rel: f(x, ζ) = Σ φⱼ(x)² (1 + ζⱼ)² / (1 + σ²)
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::LbfgsMemory;
use crate::linalg::{self, dot, norm_inf};
use crate::linesearch::{armijo, LineSearchConfig, LineSearchStatus};
use crate::oracle::{NoiseMatrix, Objective};

/// A smooth map `x ↦ φ(x)`.
pub trait ResidualMap: Send + Sync {
    fn dim(&self) -> usize;

    fn residual_count(&self) -> usize;

    fn residuals(&self, x: &[f64], out: &mut [f64]);

    /// `φ(x + h e_j)` given `base = φ(x)`. Maps where a coordinate shift is
    /// cheap to apply incrementally should override this.
    fn shifted_residuals(&self, x: &[f64], _base: &[f64], j: usize, h: f64, out: &mut [f64]) {
        let mut xs = x.to_vec();
        xs[j] += h;
        self.residuals(&xs, out);
    }

    /// Row-major `p × d` Jacobian, if available analytically.
    fn jacobian(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Conventional starting point `x_s`.
    fn standard_start(&self) -> Vec<f64>;

    fn name(&self) -> &str;
}

/// Chebyquad residuals in the Moré–Garbow–Hillstrom form:
/// `φⱼ(x) = (1/d) Σᵢ T*ⱼ(xᵢ) - ∫₀¹ T*ⱼ(t) dt` with `T*ⱼ(t) = Tⱼ(2t - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chebyquad {
    d: usize,
    p: usize,
}

impl Chebyquad {
    pub fn new(d: usize, p: usize) -> Self {
        assert!(d >= 1 && p >= 1, "Chebyquad needs d >= 1 and p >= 1");
        Self { d, p }
    }

    /// `∫₀¹ T*ⱼ(t) dt`: zero for odd `j`, `-1/(j² - 1)` for even `j`.
    fn integral(j: usize) -> f64 {
        if j % 2 == 0 {
            -1.0 / ((j * j) as f64 - 1.0)
        } else {
            0.0
        }
    }

    /// Adds `scale * T*ⱼ(xi)` into `acc[j - 1]` for `j = 1..=p`.
    fn accumulate(xi: f64, scale: f64, acc: &mut [f64]) {
        let t = 2.0 * xi - 1.0;
        let (mut prev, mut cur) = (1.0, t);
        for a in acc.iter_mut() {
            *a += scale * cur;
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
        }
    }
}

/// `φ(x)` for Chebyquad with `p` residuals.
pub fn chebyquad_residuals(x: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p];
    Chebyquad::new(x.len(), p).residuals(x, &mut out);
    out
}

/// `xᵢ = i / (d + 1)`, `i = 1..=d`.
pub fn standard_start(d: usize) -> Vec<f64> {
    (1..=d).map(|i| i as f64 / (d + 1) as f64).collect()
}

impl ResidualMap for Chebyquad {
    fn dim(&self) -> usize {
        self.d
    }

    fn residual_count(&self) -> usize {
        self.p
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &xi in x {
            Self::accumulate(xi, 1.0, out);
        }
        let d = self.d as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = *o / d - Self::integral(j + 1);
        }
    }

    fn shifted_residuals(&self, x: &[f64], base: &[f64], j: usize, h: f64, out: &mut [f64]) {
        out.fill(0.0);
        Self::accumulate(x[j] + h, 1.0, out);
        Self::accumulate(x[j], -1.0, out);
        let d = self.d as f64;
        for (o, b) in out.iter_mut().zip(base) {
            *o = b + *o / d;
        }
    }

    fn jacobian(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (d, p) = (self.d, self.p);
        let mut jac = vec![0.0; p * d];
        for (i, &xi) in x.iter().enumerate() {
            let t = 2.0 * xi - 1.0;
            // T'_{k+1} = 2 T_k + 2 t T'_k - T'_{k-1}
            let (mut t_prev, mut t_cur) = (1.0, t);
            let (mut dt_prev, mut dt_cur) = (0.0, 1.0);
            for k in 0..p {
                jac[k * d + i] = 2.0 * dt_cur / d as f64;
                let t_next = 2.0 * t * t_cur - t_prev;
                let dt_next = 2.0 * t_cur + 2.0 * t * dt_cur - dt_prev;
                t_prev = t_cur;
                t_cur = t_next;
                dt_prev = dt_cur;
                dt_cur = dt_next;
            }
        }
        Some(jac)
    }

    fn standard_start(&self) -> Vec<f64> {
        standard_start(self.d)
    }

    fn name(&self) -> &str {
        "chebyquad"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Abs,
    Rel,
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseModel::Abs => "abs",
            NoiseModel::Rel => "rel",
        })
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(NoiseModel::Abs),
            "rel" => Ok(NoiseModel::Rel),
            other => Err(Error::InvalidConfig(format!("unknown noise model `{other}`"))),
        }
    }
}

/// Stochastic least-squares problem `f(x, ζ)` over a residual map.
#[derive(Clone)]
pub struct Problem {
    map: Arc<dyn ResidualMap>,
    noise_model: NoiseModel,
    sigma: f64,
    f_star: Option<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("map", &self.map.name())
            .field("d", &self.dim())
            .field("p", &self.residual_count())
            .field("noise_model", &self.noise_model)
            .field("sigma", &self.sigma)
            .field("f_star", &self.f_star)
            .finish()
    }
}

impl Problem {
    pub fn new(map: Arc<dyn ResidualMap>, noise_model: NoiseModel, sigma: f64) -> Self {
        assert!(sigma >= 0.0, "sigma must be non-negative");
        Self {
            map,
            noise_model,
            sigma,
            f_star: None,
        }
    }

    pub fn chebyquad(d: usize, p: usize, noise_model: NoiseModel, sigma: f64) -> Self {
        Self::new(Arc::new(Chebyquad::new(d, p)), noise_model, sigma)
    }

    /// Looks a problem up by name, as used in experiment spec files.
    pub fn from_name(name: &str, d: usize, p: usize, noise_model: NoiseModel, sigma: f64) -> Result<Self> {
        match name {
            "chebyquad" => Ok(Self::chebyquad(d, p, noise_model, sigma)),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }

    pub fn with_f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    /// Same residuals and noise model with `σ = 0`.
    pub fn noise_free(&self) -> Self {
        Self {
            sigma: 0.0,
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        self.map.name()
    }

    pub fn residual_map(&self) -> &dyn ResidualMap {
        self.map.as_ref()
    }

    pub fn residual_count(&self) -> usize {
        self.map.residual_count()
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise_model
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    pub fn x_standard(&self) -> Vec<f64> {
        self.map.standard_start()
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.residual_count()];
        self.map.residuals(x, &mut out);
        out
    }

    /// `∇F(x) = 2 Jᵀ φ` when the map has an analytic Jacobian.
    pub fn exact_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim();
        let phi = self.residuals(x);
        let jac = self.map.jacobian(x)?;
        let mut g = vec![0.0; d];
        for (k, phik) in phi.iter().enumerate() {
            linalg::axpy(2.0 * phik, &jac[k * d..(k + 1) * d], &mut g);
        }
        Some(g)
    }

    fn combine(&self, phi: &[f64], zeta: &[f64]) -> f64 {
        match self.noise_model {
            NoiseModel::Abs => {
                let s: f64 = phi.iter().zip(zeta).map(|(a, z)| (a + z) * (a + z)).sum();
                s - phi.len() as f64 * self.sigma * self.sigma
            }
            NoiseModel::Rel => {
                let s: f64 = phi
                    .iter()
                    .zip(zeta)
                    .map(|(a, z)| a * a * (1.0 + z) * (1.0 + z))
                    .sum();
                s / (1.0 + self.sigma * self.sigma)
            }
        }
    }
}

/// `F(x) = Σ φⱼ²(x)`. Never counted as an oracle evaluation.
pub fn true_objective(problem: &Problem, x: &[f64]) -> f64 {
    linalg::norm_sq(&problem.residuals(x))
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn noise_dim(&self) -> usize {
        self.map.residual_count()
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, x: &[f64], zeta: &[f64]) -> f64 {
        self.combine(&self.residuals(x), zeta)
    }

    fn values(&self, x: &[f64], noise: &NoiseMatrix, out: &mut [f64]) {
        let phi = self.residuals(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.combine(&phi, noise.row(i));
        }
    }

    fn perturbed_values(&self, x: &[f64], nu: f64, noise: &NoiseMatrix, out: &mut [f64]) {
        let d = x.len();
        let phi = self.residuals(x);
        let mut shifted = vec![0.0; phi.len()];
        for j in 0..d {
            self.map.shifted_residuals(x, &phi, j, nu, &mut shifted);
            for i in 0..noise.rows() {
                out[i * d + j] = self.combine(&shifted, noise.row(i));
            }
        }
    }

    fn expected_value(&self, x: &[f64]) -> Option<f64> {
        Some(true_objective(self, x))
    }

    fn optimal_value(&self) -> Option<f64> {
        self.f_star
    }

    fn label(&self) -> String {
        format!(
            "{}(d={}, p={}, {}, sigma={:e})",
            self.name(),
            self.dim(),
            self.residual_count(),
            self.noise_model,
            self.sigma
        )
    }
}

/// Tolerance on `‖∇F‖_∞` for the reference solve.
pub const REFERENCE_GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub f_star: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// false when the iteration cap or a line-search stall ended the solve
    /// before `‖∇F‖_∞ <= REFERENCE_GRAD_TOL`; `x` is then the best point found
    pub converged: bool,
}

/// Noise-free L-BFGS solve from `x_s` with analytic gradients, run until
/// `‖∇F‖_∞ <= 1e-10`. The result supplies `F*` for error reporting.
pub fn solve_reference(problem: &Problem) -> Result<ReferenceSolution> {
    solve_reference_from(problem, &problem.x_standard(), 10_000)
}

pub fn solve_reference_from(problem: &Problem, x0: &[f64], max_iters: usize) -> Result<ReferenceSolution> {
    let problem = problem.noise_free();
    let f = |x: &[f64]| true_objective(&problem, x);
    let grad = |x: &[f64]| {
        problem.exact_gradient(x).ok_or_else(|| {
            Error::InvalidConfig(format!("{} has no analytic Jacobian", problem.name()))
        })
    };
    let ls = LineSearchConfig {
        max_backtracks: 60,
        ..Default::default()
    };

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = grad(&x)?;
    let mut memory = LbfgsMemory::new(crate::lbfgs::DEFAULT_MEMORY);
    let mut iterations = 0;
    while norm_inf(&g) > REFERENCE_GRAD_TOL && iterations < max_iters {
        let mut direction = memory.apply_h(&g);
        if !(dot(&g, &direction) > 0.0) {
            memory.clear();
            direction = g.clone();
        }
        let slope = dot(&g, &direction);
        // f is exact here, so allow for rounding in its evaluation near the minimum.
        let slack = 8.0 * f64::EPSILON * fx.abs();
        let outcome = armijo(fx, slope, 1.0, &ls, slack, |alpha| {
            let v = f(&linalg::step(&x, alpha, &direction));
            v.is_finite().then_some(v)
        });
        if outcome.status == LineSearchStatus::Failed {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        }
        let x_new = linalg::step(&x, outcome.alpha, &direction);
        let g_new = grad(&x_new)?;
        let s = linalg::sub(&x_new, &x);
        let y = linalg::sub(&g_new, &g);
        if linalg::all_finite(&s) && linalg::all_finite(&y) && linalg::norm_sq(&s) > 0.0 {
            memory.try_update(&s, &y, 0.0)?;
        }
        x = x_new;
        g = g_new;
        fx = outcome.f_new;
        iterations += 1;
    }
    let grad_inf_norm = norm_inf(&g);
    Ok(ReferenceSolution {
        f_star: f(&x),
        converged: grad_inf_norm <= REFERENCE_GRAD_TOL,
        x,
        grad_inf_norm,
        iterations,
    })
}

/// `f(x, ζ) = ½ xᵀAx + ζᵀx` with `ζ ~ N(0, σ² I_d)`, so `F(x) = ½ xᵀAx` and
/// every per-sample gradient is `Ax + ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: Vec<Vec<f64>>,
    sigma: f64,
}

impl Quadratic {
    pub fn new(a: Vec<Vec<f64>>) -> Self {
        let d = a.len();
        assert!(d >= 1 && a.iter().all(|r| r.len() == d), "A must be square");
        Self { a, sigma: 0.0 }
    }

    pub fn identity(d: usize) -> Self {
        Self::diagonal(&vec![1.0; d])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self::new(
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    /// `∇F(x) = Ax`
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|row| dot(row, x)).collect()
    }

    fn half_xax(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.gradient(x))
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn noise_dim(&self) -> usize {
        self.a.len()
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, x: &[f64], zeta: &[f64]) -> f64 {
        self.half_xax(x) + dot(zeta, x)
    }

    fn expected_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.half_xax(x))
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }

    fn label(&self) -> String {
        format!("quadratic(d={}, sigma={:e})", self.a.len(), self.sigma)
    }
}
