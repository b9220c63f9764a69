//! Limited-memory BFGS inverse-Hessian operator.
//!
//! `H_k` is never formed. [`LbfgsMemory::apply_h`] evaluates `H_k v` with the
//! two-loop recursion over the stored pairs, starting from `H⁰ = γI` where
//! `γ = yᵀs / yᵀy` of the newest pair. Pairs are admitted only when
//! `yᵀs > β‖s‖²`; anything else is skipped, which keeps `H_k` positive definite.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm_sq};

/// Default memory length.
pub const DEFAULT_MEMORY: usize = 10;
/// Default curvature threshold of the skip rule.
pub const DEFAULT_BETA: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    /// `x_{k+1} - x_k`
    pub s: Vec<f64>,
    /// gradient difference over the common batch
    pub y: Vec<f64>,
    /// `1 / yᵀs`
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
    gamma: f64,
    gamma_init: f64,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "L-BFGS memory must hold at least one pair");
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
            gamma: 1.0,
            gamma_init: 1.0,
        }
    }

    /// Scaling used while the memory is empty.
    pub fn with_gamma_init(mut self, gamma_init: f64) -> Self {
        assert!(gamma_init > 0.0, "gamma_init must be positive");
        self.gamma_init = gamma_init;
        if self.pairs.is_empty() {
            self.gamma = gamma_init;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Stored pairs, oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = &CurvaturePair> {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.gamma = self.gamma_init;
    }

    /// `H_k v` by the two-loop recursion.
    pub fn apply_h(&self, v: &[f64]) -> Vec<f64> {
        let mut q = v.to_vec();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (a, pair) in alphas.iter_mut().zip(&self.pairs).rev() {
            *a = pair.rho * dot(&pair.s, &q);
            axpy(-*a, &pair.y, &mut q);
        }
        q.iter_mut().for_each(|qi| *qi *= self.gamma);
        for (a, pair) in alphas.iter().zip(&self.pairs) {
            let b = pair.rho * dot(&pair.y, &q);
            axpy(a - b, &pair.s, &mut q);
        }
        q
    }

    /// `H_k (H_k v)`; the IPQN test needs exactly this one extra product.
    pub fn apply_h_squared(&self, v: &[f64]) -> Vec<f64> {
        self.apply_h(&self.apply_h(v))
    }

    /// Stores `(s, y)` if `yᵀs > β‖s‖²` and reports whether it was admitted.
    /// The oldest pair is evicted once the memory is full.
    pub fn try_update(&mut self, s: &[f64], y: &[f64], beta: f64) -> Result<bool> {
        assert_eq!(s.len(), y.len(), "s and y must have equal length");
        if !all_finite(s) || !all_finite(y) {
            return Err(Error::NonFiniteCurvature);
        }
        let ys = dot(y, s);
        if !(ys > beta * norm_sq(s)) {
            return Ok(false);
        }
        let yy = norm_sq(y);
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair {
            s: s.to_vec(),
            y: y.to_vec(),
            rho: 1.0 / ys,
        });
        self.gamma = ys / yy;
        Ok(true)
    }
}
