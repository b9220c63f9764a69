//! Experiment specs, per-cell telemetry files, manifests and reports.
//!
//! A spec is a TOML document with a `[problem]` table, a `[run]` table and one
//! `[[method]]` table per solver configuration:
//!
//! ```toml
//! [problem]
//! name = "chebyquad"
//! d = 30
//! p = 45
//! noise_model = "abs"     # or "rel"
//! sigma = 1e-3
//!
//! [run]
//! seeds = [1, 2, 3, 4, 5]
//! budget = 10_000_000     # evaluations of f(x, ζ) per cell
//! start_scale = 10.0      # x0 = start_scale * x_s
//!
//! [[method]]
//! method = "fd_norm"
//! s0 = 64
//!
//! [[method]]
//! method = "fd_sg"
//! s0 = 64
//! sg_alpha_from = "tune/manifest.json"
//! ```
//!
//! Every (method, seed) cell writes one CSV with the header [`CSV_HEADER`];
//! floats carry 17 significant digits so a report reproduces them exactly.
//! `f_true` and `err` are computed from the noise-free objective for logging
//! and are never available to the solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{solve_reference, NoiseModel, Problem};
use crate::sampling::{GrowthRule, TestKind};
use crate::solver::{
    run, tune_fd_sg, IterationRecord, LsFailurePolicy, Method, SolverConfig, StepStatus, StopReason, TuneResult,
};
use crate::VERSION;

/// Column order of every per-cell CSV.
pub const CSV_HEADER: &str =
    "k,batch_size,alpha,f_sampled,f_true,err,grad_norm_est,test_passed,ls_status,cum_evals,ls_trials";

/// Column order of the long-format report.
pub const REPORT_HEADER: &str = "method,seed,cum_evals,err";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub d: usize,
    pub p: usize,
    pub noise_model: NoiseModel,
    pub sigma: f64,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        if self.d == 0 || self.p == 0 {
            return Err(Error::InvalidConfig("problem needs d >= 1 and p >= 1".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("sigma = {} must be >= 0", self.sigma)));
        }
        Problem::from_name(&self.name, self.d, self.p, self.noise_model, self.sigma)
    }
}

fn default_start_scale() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub seeds: Vec<u64>,
    pub budget: u64,
    #[serde(default = "default_start_scale")]
    pub start_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// One `[[method]]` table. Unset keys fall back to [`SolverConfig::new`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<TestKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_rule: Option<GrowthRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_subset_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ls_failure_policy: Option<LsFailurePolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sg_alpha: Option<f64>,
    /// tune manifest whose chosen α is used when `sg_alpha` is unset
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sg_alpha_from: Option<PathBuf>,
}

impl MethodSpec {
    pub fn method(&self) -> Result<Method> {
        self.method
            .ok_or_else(|| Error::InvalidConfig("every [[method]] table needs a `method` key".into()))
    }

    pub fn label(&self) -> Result<String> {
        Ok(self.label.clone().unwrap_or_else(|| self.method.map(|m| m.to_string()).unwrap_or_default()))
            .and_then(|l| if l.is_empty() { self.method().map(|m| m.to_string()) } else { Ok(l) })
    }

    /// Solver configuration for one cell. `sg_alpha_from` is not resolved here.
    pub fn solver_config(&self, seed: u64, budget: u64) -> Result<SolverConfig> {
        let method = self.method()?;
        let mut cfg = SolverConfig::new(method).with_seed(seed).with_max_evals(budget);
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            test => cfg.policy.test,
            nu => cfg.nu,
            theta => cfg.policy.theta,
            s0 => cfg.policy.s0,
            s_max => cfg.policy.s_max,
            growth_rule => cfg.policy.growth_rule,
            variance_subset_fraction => cfg.policy.variance_subset_fraction,
            c1 => cfg.ls.c1,
            tau => cfg.ls.tau,
            max_backtracks => cfg.ls.max_backtracks,
            alpha_max => cfg.ls.alpha_max,
            ls_failure_policy => cfg.ls_failure_policy,
            m => cfg.lbfgs_m,
            beta => cfg.beta,
            gamma_init => cfg.gamma_init,
        }
        cfg.max_iters = self.max_iters;
        cfg.sg_alpha = self.sg_alpha;
        if cfg.policy.s0 > cfg.policy.s_max {
            cfg.policy.s_max = cfg.policy.s0;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub run: RunSpec,
    #[serde(rename = "method")]
    pub methods: Vec<MethodSpec>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text, path)?;
        // relative paths inside a spec are relative to the spec file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(out) = &spec.run.output {
            if out.is_relative() {
                spec.run.output = Some(base.join(out));
            }
        }
        for m in &mut spec.methods {
            if let Some(p) = &m.sg_alpha_from {
                if p.is_relative() {
                    m.sg_alpha_from = Some(base.join(p));
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.build()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("spec needs at least one [[method]]".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidConfig("run.seeds must list at least one seed".into()));
        }
        if !(self.run.start_scale.is_finite()) {
            return Err(Error::InvalidConfig("run.start_scale must be finite".into()));
        }
        let mut labels = BTreeMap::new();
        for m in &self.methods {
            let label = m.label()?;
            if labels.insert(label.clone(), ()).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate method label `{label}`")));
            }
            let mut cfg = m.solver_config(self.run.seeds[0], self.run.budget)?;
            if cfg.method == Method::FdSg && cfg.sg_alpha.is_none() {
                if m.sg_alpha_from.is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "method `{label}`: fd_sg needs `sg_alpha` or `sg_alpha_from`"
                    )));
                }
                cfg.sg_alpha = Some(1.0);
            }
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn x0(&self, problem: &Problem) -> Vec<f64> {
        problem.x_standard().iter().map(|v| self.run.start_scale * v).collect()
    }
}

/// Command-line overrides applied on top of a spec.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub budget: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        if let Some(seeds) = &self.seeds {
            spec.run.seeds = seeds.clone();
        }
        if let Some(budget) = self.budget {
            spec.run.budget = budget;
        }
        spec.validate()
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub f_sampled: f64,
    pub f_true: f64,
    pub err: f64,
    pub grad_norm_est: f64,
    pub test_passed: bool,
    pub ls_status: StepStatus,
    pub cum_evals: u64,
    pub ls_trials: u32,
}

impl From<&IterationRecord> for CsvRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            k: r.k,
            batch_size: r.batch_size,
            alpha: r.alpha,
            f_sampled: r.f_sampled,
            f_true: r.f_true,
            err: r.err,
            grad_norm_est: r.grad_norm_est,
            test_passed: r.test_passed,
            ls_status: r.ls_status,
            cum_evals: r.cum_evals,
            ls_trials: r.ls_trials,
        }
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_csv(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.batch_size,
            fmt_float(r.alpha),
            fmt_float(r.f_sampled),
            fmt_float(r.f_true),
            fmt_float(r.err),
            fmt_float(r.grad_norm_est),
            r.test_passed,
            r.ls_status.as_str(),
            r.cum_evals,
            r.ls_trials,
        );
    }
    out
}

pub fn records_to_csv(records: &[IterationRecord]) -> String {
    format_csv(&records.iter().map(CsvRow::from).collect::<Vec<_>>())
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<CsvRow>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(parse_err(1, format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(parse_err(lineno, format!("expected 11 columns, found {}", cols.len())));
        }
        macro_rules! col {
            ($i:expr) => {
                cols[$i]
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("column {}: {e}", $i + 1)))?
            };
        }
        rows.push(CsvRow {
            k: col!(0),
            batch_size: col!(1),
            alpha: col!(2),
            f_sampled: col!(3),
            f_true: col!(4),
            err: col!(5),
            grad_norm_est: col!(6),
            test_passed: col!(7),
            ls_status: cols[8].parse().map_err(|e: Error| parse_err(lineno, e.to_string()))?,
            cum_evals: col!(9),
            ls_trials: col!(10),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub name: String,
    pub d: usize,
    pub p: usize,
    pub noise_model: NoiseModel,
    pub sigma: f64,
}

impl From<&ProblemSpec> for ProblemSummary {
    fn from(p: &ProblemSpec) -> Self {
        Self {
            name: p.name.clone(),
            d: p.d,
            p: p.p,
            noise_model: p.noise_model,
            sigma: p.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub f_star: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub label: String,
    pub method: Method,
    pub seed: u64,
    /// CSV file name, relative to the manifest
    pub csv: Option<String>,
    pub sg_alpha: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub iterations: usize,
    pub evals: u64,
    pub final_f_true: f64,
    pub final_err: f64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub label: String,
    pub seed: u64,
    pub budget: u64,
    pub best_alpha: f64,
    pub best_j: i32,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestKind {
    Run,
    Tune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ManifestKind,
    pub version: String,
    pub spec: ExperimentSpec,
    pub problem: ProblemSummary,
    pub reference: ReferenceSummary,
    pub budget: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub cells: Vec<CellSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneSummary>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_file(path, &(text + "\n"))
    }

    pub fn all_cells_ok(&self) -> bool {
        self.cells.iter().all(|c| c.error.is_none())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// The problem with `F*` attached, plus the reference solve summary.
pub fn prepare_problem(spec: &ExperimentSpec) -> Result<(Problem, ReferenceSummary)> {
    let problem = spec.problem.build()?;
    let reference = solve_reference(&problem)?;
    let summary = ReferenceSummary {
        f_star: reference.f_star,
        grad_inf_norm: reference.grad_inf_norm,
        iterations: reference.iterations,
        converged: reference.converged,
    };
    Ok((problem.with_f_star(reference.f_star), summary))
}

fn resolve_sg_alpha(m: &MethodSpec, cfg: &mut SolverConfig) -> Result<()> {
    if cfg.method != Method::FdSg || cfg.sg_alpha.is_some() {
        return Ok(());
    }
    let path = m
        .sg_alpha_from
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("fd_sg needs `sg_alpha` or `sg_alpha_from`".into()))?;
    let manifest = Manifest::read(path)?;
    let tuning = manifest.tuning.ok_or_else(|| Error::Parse {
        path: path.clone(),
        message: "manifest has no tuning section".into(),
    })?;
    cfg.sg_alpha = Some(tuning.best_alpha);
    Ok(())
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(1).max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

fn cell_file_name(label: &str, seed: u64) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}_seed{seed}.csv")
}

/// Runs every (method, seed) cell, writes one CSV per cell and `manifest.json`.
///
/// A failing cell is recorded in the manifest and does not stop the others;
/// only spec-level problems are returned as errors.
pub fn cmd_run(spec: &ExperimentSpec, out_dir: &Path, jobs: Option<usize>) -> Result<Manifest> {
    spec.validate()?;
    let started = Instant::now();
    let (problem, reference) = prepare_problem(spec)?;
    let x0 = spec.x0(&problem);

    let mut cells = Vec::new();
    for m in &spec.methods {
        for &seed in &spec.run.seeds {
            cells.push((m, seed));
        }
    }
    let pool = pool(jobs)?;
    let summaries: Vec<CellSummary> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, seed)| run_cell(m, seed, spec.run.budget, &problem, &x0, out_dir))
            .collect()
    });

    let manifest = Manifest {
        kind: ManifestKind::Run,
        version: VERSION.to_string(),
        spec: spec.clone(),
        problem: (&spec.problem).into(),
        reference,
        budget: spec.run.budget,
        seeds: spec.run.seeds.clone(),
        cells: summaries,
        tuning: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn run_cell(m: &MethodSpec, seed: u64, budget: u64, problem: &Problem, x0: &[f64], out_dir: &Path) -> CellSummary {
    let started = Instant::now();
    let label = m.label().unwrap_or_default();
    let method = m.method.unwrap_or(Method::FdNorm);
    let mut summary = CellSummary {
        label: label.clone(),
        method,
        seed,
        csv: None,
        sg_alpha: None,
        stop_reason: None,
        iterations: 0,
        evals: 0,
        final_f_true: f64::NAN,
        final_err: f64::NAN,
        wall_time_s: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let mut cfg = m.solver_config(seed, budget)?;
        resolve_sg_alpha(m, &mut cfg)?;
        summary.sg_alpha = cfg.sg_alpha;
        let res = run(problem, x0, &cfg)?;
        let name = cell_file_name(&label, seed);
        write_file(&out_dir.join(&name), &records_to_csv(&res.records))?;
        summary.csv = Some(name);
        summary.stop_reason = Some(res.stop_reason);
        summary.iterations = res.records.len();
        summary.evals = res.evals;
        summary.final_f_true = res.final_f_true(problem);
        summary.final_err = summary.final_f_true - problem.f_star().unwrap_or(f64::NAN);
        Ok(())
    })();
    if let Err(e) = outcome {
        summary.error = Some(e.to_string());
    }
    summary.wall_time_s = started.elapsed().as_secs_f64();
    summary
}

pub const TUNE_HEADER: &str = "j,alpha,final_f_true,final_err,stop_reason,evals,iterations";

pub fn tune_to_csv(result: &TuneResult) -> String {
    let mut out = String::from(TUNE_HEADER);
    out.push('\n');
    for t in &result.trials {
        let stop = serde_json::to_value(t.stop_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.j,
            fmt_float(t.alpha),
            fmt_float(t.final_f_true),
            fmt_float(t.final_err),
            stop,
            t.evals,
            t.iterations
        );
    }
    out
}

/// Tunes the spec's first `fd_sg` method on the first seed over `α = 2ʲ`,
/// writing `tune.csv` and a manifest whose `tuning.best_alpha` can be fed
/// back through `sg_alpha_from`.
pub fn cmd_tune(spec: &ExperimentSpec, out_dir: &Path) -> Result<(Manifest, TuneResult)> {
    spec.validate()?;
    let started = Instant::now();
    let m = spec
        .methods
        .iter()
        .find(|m| m.method == Some(Method::FdSg))
        .ok_or_else(|| Error::InvalidConfig("tune needs a [[method]] with method = \"fd_sg\"".into()))?;
    let (problem, reference) = prepare_problem(spec)?;
    let x0 = spec.x0(&problem);
    let seed = spec.run.seeds[0];
    let mut base = m.solver_config(seed, spec.run.budget)?;
    base.sg_alpha = Some(1.0);
    let result = tune_fd_sg(&problem, &x0, &base, spec.run.budget)?;
    write_file(&out_dir.join("tune.csv"), &tune_to_csv(&result))?;
    let manifest = Manifest {
        kind: ManifestKind::Tune,
        version: VERSION.to_string(),
        spec: spec.clone(),
        problem: (&spec.problem).into(),
        reference,
        budget: spec.run.budget,
        seeds: vec![seed],
        cells: Vec::new(),
        tuning: Some(TuneSummary {
            label: m.label()?,
            seed,
            budget: spec.run.budget,
            best_alpha: result.best_alpha,
            best_j: result.best_j,
            csv: "tune.csv".into(),
        }),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok((manifest, result))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub seed: u64,
    pub cum_evals: u64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub budget: u64,
    pub median_final_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<MethodSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Merges run manifests into a long-format `(method, seed, cum_evals, err)`
/// table and a per-method median of the final error.
pub fn build_report(manifest_paths: &[PathBuf]) -> Result<Report> {
    if manifest_paths.is_empty() {
        return Err(Error::InvalidConfig("report needs at least one manifest".into()));
    }
    let mut problem: Option<(ProblemSummary, PathBuf)> = None;
    let mut rows = Vec::new();
    let mut finals: BTreeMap<String, (Vec<f64>, u64)> = BTreeMap::new();
    for path in manifest_paths {
        let manifest = Manifest::read(path)?;
        match &problem {
            None => problem = Some((manifest.problem.clone(), path.clone())),
            Some((p, first)) if *p != manifest.problem => {
                return Err(Error::MismatchedProblems(format!(
                    "{} has {:?} but {} has {:?}",
                    first.display(),
                    p,
                    path.display(),
                    manifest.problem
                )));
            }
            Some(_) => {}
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        for cell in manifest.cells.iter().filter(|c| c.error.is_none()) {
            let Some(csv) = &cell.csv else { continue };
            let csv_path = dir.join(csv);
            let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
            let parsed = parse_csv(&text, &csv_path)?;
            for r in &parsed {
                rows.push(ReportRow {
                    method: cell.label.clone(),
                    seed: cell.seed,
                    cum_evals: r.cum_evals,
                    err: r.err,
                });
            }
            let entry = finals.entry(cell.label.clone()).or_insert((Vec::new(), manifest.budget));
            if let Some(last) = parsed.last() {
                entry.0.push(last.err);
            }
        }
    }
    let summary = finals
        .into_iter()
        .map(|(method, (errs, budget))| MethodSummary {
            runs: errs.len(),
            median_final_err: median(&errs),
            method,
            budget,
        })
        .collect();
    Ok(Report { rows, summary })
}

pub fn report_to_csv(report: &Report) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{}", r.method, r.seed, r.cum_evals, fmt_float(r.err));
    }
    out
}

pub fn summary_to_csv(report: &Report) -> String {
    let mut out = String::from("method,runs,budget,median_final_err\n");
    for s in &report.summary {
        let _ = writeln!(out, "{},{},{},{}", s.method, s.runs, s.budget, fmt_float(s.median_final_err));
    }
    out
}

/// Writes `report.csv` and `summary.csv` into `out_dir`.
pub fn cmd_report(manifest_paths: &[PathBuf], out_dir: &Path) -> Result<Report> {
    let report = build_report(manifest_paths)?;
    write_file(&out_dir.join("report.csv"), &report_to_csv(&report))?;
    write_file(&out_dir.join("summary.csv"), &summary_to_csv(&report))?;
    Ok(report)
}
