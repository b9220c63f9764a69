//! Seed-indexed zero-order oracle under common random numbers.
//!
//! A realization `ζᵢ` is identified by a [`CrnSample`] id. Its noise vector is
//! a pure function of `(master seed, id, p)`, so the same `ζᵢ` can be replayed
//! at any number of points without storing it. Every call to `f(x, ζᵢ)` made
//! through an [`Oracle`] is counted in its [`EvalCounter`].

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Identity of one noise realization `ζᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CrnSample {
    pub id: u64,
}

impl CrnSample {
    pub const fn new(id: u64) -> Self {
        Self { id }
    }
}

/// Ordered set of samples `S_k` plus the size of the variance subset `S_k^v`,
/// which is always a prefix of `S_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    samples: Vec<CrnSample>,
    variance_subset_size: usize,
}

impl Batch {
    pub fn new(samples: Vec<CrnSample>, variance_subset_size: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("a batch needs at least one sample".into()));
        }
        if variance_subset_size == 0 || variance_subset_size > samples.len() {
            return Err(Error::InvalidConfig(format!(
                "variance subset size {variance_subset_size} outside 1..={}",
                samples.len()
            )));
        }
        let mut ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate sample id in batch".into()));
        }
        Ok(Self {
            samples,
            variance_subset_size,
        })
    }

    /// Samples `first, first + 1, ..., first + len - 1`, all used for the variance.
    pub fn consecutive(first: u64, len: usize) -> Self {
        assert!(len >= 1, "a batch needs at least one sample");
        Self {
            samples: (first..first + len as u64).map(CrnSample::new).collect(),
            variance_subset_size: len,
        }
    }

    pub fn with_variance_subset(mut self, size: usize) -> Result<Self> {
        if size == 0 || size > self.samples.len() {
            return Err(Error::InvalidConfig(format!(
                "variance subset size {size} outside 1..={}",
                self.samples.len()
            )));
        }
        self.variance_subset_size = size;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[CrnSample] {
        &self.samples
    }

    pub fn variance_subset_size(&self) -> usize {
        self.variance_subset_size
    }

    pub fn variance_subset(&self) -> &[CrnSample] {
        &self.samples[..self.variance_subset_size]
    }

    /// Id range when the batch is consecutive, which is how the solver draws them.
    pub fn id_range(&self) -> Option<Range<u64>> {
        let first = self.samples[0].id;
        let consecutive = self
            .samples
            .iter()
            .enumerate()
            .all(|(i, s)| s.id == first + i as u64);
        consecutive.then(|| first..first + self.samples.len() as u64)
    }
}

/// Draws `ζ ~ N(0, σ² I_p)` for one sample.
///
/// The generator is ChaCha8 keyed by `master_seed` with the sample id as the
/// stream number, so realizations for different ids are independent and any
/// realization can be regenerated in isolation.
pub fn realize_noise(sample: CrnSample, p: usize, sigma: f64, master_seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; p];
    fill_gaussian(sample, sigma, master_seed, &mut out);
    out
}

fn fill_gaussian(sample: CrnSample, sigma: f64, master_seed: u64, out: &mut [f64]) {
    if sigma == 0.0 {
        out.fill(0.0);
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample.id);
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sigma * z;
    }
}

/// Maps a sample id to its noise vector.
pub trait NoiseSource: Sync {
    fn realize_into(&self, sample: CrnSample, out: &mut [f64]);
}

/// The default `N(0, σ² I)` source used by [`Oracle::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    pub sigma: f64,
    pub master_seed: u64,
}

impl NoiseSource for GaussianNoise {
    fn realize_into(&self, sample: CrnSample, out: &mut [f64]) {
        fill_gaussian(sample, self.sigma, self.master_seed, out);
    }
}

/// Noise for a batch, one row of length `p` per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl NoiseMatrix {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            p,
            n,
            data: vec![0.0; n * p],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == p), "ragged noise rows");
        Self {
            p,
            n: rows.len(),
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn row_len(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.p..(i + 1) * self.p]
    }
}

/// A stochastic function `f(x, ζ)` with `x ∈ ℝᵈ` and `ζ ∈ ℝᵖ`.
///
/// Only [`Objective::value`] is required. The batched methods exist so that a
/// problem can share work between samples (for least squares the residuals at
/// `x` do not depend on `ζ`); overrides must agree with `value` to rounding.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Length `p` of the noise vector.
    fn noise_dim(&self) -> usize;

    fn noise_sigma(&self) -> f64 {
        0.0
    }

    fn value(&self, x: &[f64], zeta: &[f64]) -> f64;

    /// `out[i] = f(x, ζᵢ)` for every row of `noise`.
    fn values(&self, x: &[f64], noise: &NoiseMatrix, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.value(x, noise.row(i));
        }
    }

    /// `out[i * d + j] = f(x + ν e_j, ζᵢ)`.
    fn perturbed_values(&self, x: &[f64], nu: f64, noise: &NoiseMatrix, out: &mut [f64]) {
        let d = x.len();
        let mut xp = x.to_vec();
        for i in 0..noise.rows() {
            let zeta = noise.row(i);
            for j in 0..d {
                xp[j] = x[j] + nu;
                out[i * d + j] = self.value(&xp, zeta);
                xp[j] = x[j];
            }
        }
    }

    /// `F(x) = E[f(x, ζ)]` when known in closed form. Logging only: the
    /// optimizers never read it.
    fn expected_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Known optimal value `F*`, used to report `F(x) - F*`.
    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn label(&self) -> String {
        "objective".into()
    }
}

/// Running count of individual `f(x, ζᵢ)` evaluations.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Batch forward-difference gradient and its sample statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// `∇F_S^FD(x)`: mean of the per-sample FD gradients over the whole batch.
    pub batch_gradient: Vec<f64>,
    /// Per-sample FD gradients for the variance subset `S^v`.
    pub per_sample_gradients: Vec<Vec<f64>>,
    /// `Σ_{S^v} ‖∇Fᵢ − ∇F_S‖² / (|S^v| − 1)`, zero when `|S^v| < 2`.
    pub sample_variance: f64,
    pub evals_used: u64,
    /// `f(x, ζᵢ)` for every sample of the batch, in batch order.
    pub base_values: Vec<f64>,
}

impl GradientEstimate {
    /// Builds the estimate from all per-sample gradients of a batch; the first
    /// `variance_subset_size` of them form `S^v`.
    pub fn from_samples(
        per_sample: Vec<Vec<f64>>,
        variance_subset_size: usize,
        base_values: Vec<f64>,
        evals_used: u64,
    ) -> Self {
        assert!(!per_sample.is_empty(), "gradient estimate over an empty batch");
        let n = per_sample.len();
        let d = per_sample[0].len();
        let mut mean = vec![0.0; d];
        for g in &per_sample {
            linalg::axpy(1.0, g, &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut subset = per_sample;
        subset.truncate(variance_subset_size.min(n));
        let sample_variance = if subset.len() < 2 {
            0.0
        } else {
            let ss: f64 = subset
                .iter()
                .map(|g| g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum();
            ss / (subset.len() - 1) as f64
        };
        Self {
            batch_gradient: mean,
            per_sample_gradients: subset,
            sample_variance,
            evals_used,
            base_values,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.base_values.len()
    }

    pub fn variance_subset_size(&self) -> usize {
        self.per_sample_gradients.len()
    }

    /// `F_S(x)`, the batch mean of the base values.
    pub fn sampled_value(&self) -> f64 {
        mean(&self.base_values)
    }
}

/// A batch whose noise rows have been generated once and can be replayed at
/// any number of points.
#[derive(Debug, Clone)]
pub struct RealizedBatch {
    pub batch: Batch,
    pub noise: NoiseMatrix,
}

impl RealizedBatch {
    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }
}

/// Zero-order oracle over an [`Objective`] with CRN noise and eval accounting.
pub struct Oracle<'a, O: Objective + ?Sized, N: NoiseSource = GaussianNoise> {
    objective: &'a O,
    noise: N,
    counter: EvalCounter,
}

impl<'a, O: Objective + ?Sized> Oracle<'a, O, GaussianNoise> {
    /// Gaussian noise with the objective's `σ`, keyed by `master_seed`.
    pub fn new(objective: &'a O, master_seed: u64) -> Self {
        let noise = GaussianNoise {
            sigma: objective.noise_sigma(),
            master_seed,
        };
        Self::with_noise(objective, noise)
    }
}

impl<'a, O: Objective + ?Sized, N: NoiseSource> Oracle<'a, O, N> {
    pub fn with_noise(objective: &'a O, noise: N) -> Self {
        Self {
            objective,
            noise,
            counter: EvalCounter::new(),
        }
    }

    pub fn objective(&self) -> &'a O {
        self.objective
    }

    pub fn evals(&self) -> u64 {
        self.counter.total()
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn realize(&self, batch: &Batch) -> RealizedBatch {
        let p = self.objective.noise_dim();
        let mut noise = NoiseMatrix::zeros(batch.len(), p);
        for (i, s) in batch.samples().iter().enumerate() {
            self.noise.realize_into(*s, noise.row_mut(i));
        }
        RealizedBatch {
            batch: batch.clone(),
            noise,
        }
    }

    fn checked(&self, values: &[f64]) -> Result<()> {
        if linalg::all_finite(values) {
            Ok(())
        } else {
            Err(Error::NonFiniteValue {
                evaluation: self.counter.total(),
            })
        }
    }

    /// `f(x, ζᵢ)` for one sample.
    pub fn eval_f(&self, x: &[f64], sample: CrnSample) -> Result<f64> {
        let mut zeta = vec![0.0; self.objective.noise_dim()];
        self.noise.realize_into(sample, &mut zeta);
        self.counter.add(1);
        let v = self.objective.value(x, &zeta);
        self.checked(&[v])?;
        Ok(v)
    }

    /// Forward-difference gradient for one sample, `d + 1` evaluations.
    pub fn fd_gradient_sample(&self, x: &[f64], nu: f64, sample: CrnSample) -> Result<Vec<f64>> {
        let batch = Batch::consecutive(sample.id, 1);
        let est = self.gradient(x, nu, &self.realize(&batch))?;
        Ok(est.batch_gradient)
    }

    /// Batch FD gradient, `(d + 1)|S|` evaluations.
    pub fn fd_gradient_batch(&self, x: &[f64], nu: f64, batch: &Batch) -> Result<GradientEstimate> {
        self.gradient(x, nu, &self.realize(batch))
    }

    /// `F_S(x)`, `|S|` evaluations.
    pub fn eval_batch_mean(&self, x: &[f64], batch: &Batch) -> Result<f64> {
        Ok(mean(&self.batch_values(x, &self.realize(batch))?))
    }

    /// `f(x, ζᵢ)` for every sample of a realized batch.
    pub fn batch_values(&self, x: &[f64], rb: &RealizedBatch) -> Result<Vec<f64>> {
        let mut out = vec![0.0; rb.len()];
        self.counter.add(rb.len() as u64);
        self.objective.values(x, &rb.noise, &mut out);
        self.checked(&out)?;
        Ok(out)
    }

    /// Batch FD gradient on an already realized batch, `(d + 1)|S|` evaluations.
    pub fn gradient(&self, x: &[f64], nu: f64, rb: &RealizedBatch) -> Result<GradientEstimate> {
        let base = self.batch_values(x, rb)?;
        let mut est = self.gradient_from_base(x, nu, rb, &base)?;
        est.evals_used += rb.len() as u64;
        Ok(est)
    }

    /// Batch FD gradient reusing known base values `f(x, ζᵢ)`, `d|S|` evaluations.
    pub fn gradient_from_base(
        &self,
        x: &[f64],
        nu: f64,
        rb: &RealizedBatch,
        base: &[f64],
    ) -> Result<GradientEstimate> {
        assert_eq!(base.len(), rb.len(), "one base value per sample");
        let d = x.len();
        let n = rb.len();
        let mut shifted = vec![0.0; n * d];
        self.counter.add((n * d) as u64);
        self.objective.perturbed_values(x, nu, &rb.noise, &mut shifted);
        self.checked(&shifted)?;
        let per_sample = (0..n)
            .map(|i| {
                shifted[i * d..(i + 1) * d]
                    .iter()
                    .map(|v| (v - base[i]) / nu)
                    .collect()
            })
            .collect();
        Ok(GradientEstimate::from_samples(
            per_sample,
            rb.batch.variance_subset_size(),
            base.to_vec(),
            (n * d) as u64,
        ))
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
