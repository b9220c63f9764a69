//! Adaptive sample-size control.
//!
//! Two practical tests decide whether the current batch is large enough:
//!
//! - norm test: `Var(∇Fᵢ) / |S| <= θ² ‖g_S‖²`
//! - inner-product quasi-Newton (IPQN) test:
//!   `Var((H g_S)ᵀ H gᵢ) / |S| <= θ² ‖H g_S‖⁴`
//!
//! When a test fails, solving it for `|S|` gives the size requested for the
//! next iteration. The current iteration keeps its estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::oracle::{Batch, GradientEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Norm,
    Ipqn,
    /// keep `|S| = s0` throughout
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRule {
    /// exactly the size the failed test asks for
    ExactRequired,
    /// at least double the current size
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizePolicy {
    pub theta: f64,
    pub test: TestKind,
    pub s0: usize,
    pub s_max: usize,
    pub growth_rule: GrowthRule,
    /// fraction of the batch used for the variance estimate (a prefix of `S_k`)
    pub variance_subset_fraction: f64,
}

impl Default for SampleSizePolicy {
    fn default() -> Self {
        Self {
            theta: 0.9,
            test: TestKind::Norm,
            s0: 2,
            s_max: 100_000,
            growth_rule: GrowthRule::ExactRequired,
            variance_subset_fraction: 1.0,
        }
    }
}

impl SampleSizePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!("theta = {} not in (0, 1)", self.theta)));
        }
        if self.s0 == 0 || self.s0 > self.s_max {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= s0 <= s_max, got s0 = {} and s_max = {}",
                self.s0, self.s_max
            )));
        }
        if !(self.variance_subset_fraction > 0.0 && self.variance_subset_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "variance_subset_fraction = {} not in (0, 1]",
                self.variance_subset_fraction
            )));
        }
        Ok(())
    }

    /// `|S^v|` for a batch of `n`: the configured fraction, but never fewer
    /// than two samples when the batch has them.
    pub fn variance_subset_size(&self, n: usize) -> usize {
        let frac = (self.variance_subset_fraction * n as f64).ceil() as usize;
        frac.max(2).min(n).max(1)
    }

    pub fn initial_batch(&self, ids: &mut SampleIds) -> Batch {
        self.batch_of(self.s0, ids)
    }

    fn batch_of(&self, n: usize, ids: &mut SampleIds) -> Batch {
        ids.take(n)
            .with_variance_subset(self.variance_subset_size(n))
            .expect("subset size is within the batch")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// smallest batch size that would satisfy the test (at least the current
    /// size; `usize::MAX` when no finite size can)
    pub required_size: usize,
}

impl TestOutcome {
    /// Outcome recorded when no test is run.
    pub fn pass(batch_size: usize) -> Self {
        Self {
            passed: true,
            lhs: 0.0,
            rhs: 0.0,
            required_size: batch_size,
        }
    }
}

fn outcome(numerator: f64, batch_size: usize, rhs: f64) -> TestOutcome {
    let lhs = numerator / batch_size as f64;
    if rhs == 0.0 {
        // Either both sides vanish (stationary for the sampled problem) or no
        // batch size can certify the estimate.
        let passed = numerator == 0.0;
        return TestOutcome {
            passed,
            lhs,
            rhs,
            required_size: if passed { batch_size } else { usize::MAX },
        };
    }
    let passed = lhs <= rhs;
    let required_size = if passed {
        batch_size
    } else {
        let r = (numerator / rhs).ceil();
        if r.is_finite() && r < usize::MAX as f64 {
            (r as usize).max(batch_size)
        } else {
            usize::MAX
        }
    };
    TestOutcome {
        passed,
        lhs,
        rhs,
        required_size,
    }
}

/// Practical finite-difference norm test.
pub fn norm_test(estimate: &GradientEstimate, batch_size: usize, theta: f64) -> TestOutcome {
    assert!(batch_size >= 1, "batch size must be positive");
    let rhs = theta * theta * norm_sq(&estimate.batch_gradient);
    outcome(estimate.sample_variance, batch_size, rhs)
}

/// Practical finite-difference inner-product quasi-Newton test.
///
/// `hg = H g_S` and `hhg = H (H g_S)`. Because `H` is symmetric,
/// `(H g_S)ᵀ(H gᵢ) = hhgᵀ gᵢ`, so no per-sample product with `H` is needed.
pub fn ipqn_test(
    estimate: &GradientEstimate,
    hg: &[f64],
    hhg: &[f64],
    batch_size: usize,
    theta: f64,
) -> TestOutcome {
    assert!(batch_size >= 1, "batch size must be positive");
    let hg_sq = norm_sq(hg);
    let subset = &estimate.per_sample_gradients;
    let variance = if subset.len() < 2 {
        0.0
    } else {
        let ss: f64 = subset
            .iter()
            .map(|g| {
                let dev = dot(hhg, g) - hg_sq;
                dev * dev
            })
            .sum();
        ss / (subset.len() - 1) as f64
    };
    let rhs = theta * theta * hg_sq * hg_sq;
    outcome(variance, batch_size, rhs)
}

/// Hands out fresh, consecutive sample ids so batches never overlap.
#[derive(Debug, Clone, Default)]
pub struct SampleIds {
    next: u64,
}

impl SampleIds {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn peek(&self) -> u64 {
        self.next
    }

    pub fn take(&mut self, n: usize) -> Batch {
        let b = Batch::consecutive(self.next, n);
        self.next += n as u64;
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextBatch {
    pub batch: Batch,
    /// the requested size exceeded `s_max` and was capped
    pub saturated: bool,
}

/// Batch for the next iteration, drawn from fresh ids.
pub fn next_batch(
    policy: &SampleSizePolicy,
    current: &Batch,
    outcome: &TestOutcome,
    ids: &mut SampleIds,
) -> NextBatch {
    let n = current.len();
    let mut wanted = if policy.test == TestKind::Fixed || outcome.passed {
        n
    } else {
        match policy.growth_rule {
            GrowthRule::ExactRequired => outcome.required_size,
            GrowthRule::Geometric => outcome.required_size.max(n.saturating_mul(2)),
        }
    };
    if policy.test != TestKind::Fixed && current.variance_subset_size() < 2 {
        // a single sample cannot estimate a variance
        wanted = wanted.max(2);
    }
    let saturated = wanted > policy.s_max;
    let size = wanted.min(policy.s_max).max(1);
    NextBatch {
        batch: policy.batch_of(size, ids),
        saturated,
    }
}
