//! Backward-Euler convolution quadrature weights: the power-series
//! coefficients of `((1 - ζ) / τ)^β`.

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct CqWeights {
    beta: f64,
    tau: f64,
    g: Vec<f64>,
    d: Vec<f64>,
}

impl CqWeights {
    /// First `count` coefficients, via `g_j = g_{j-1} (j - 1 - β) / j`.
    pub fn new(beta: f64, tau: f64, count: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if count == 0 {
            return Err(Error::InvalidParameter("weight count must be at least 1".into()));
        }
        let mut g = Vec::with_capacity(count);
        g.push(1.0);
        for j in 1..count {
            let prev = g[j - 1];
            g.push(prev * (j as f64 - 1.0 - beta) / j as f64);
        }
        let scale = tau.powf(-beta);
        let d = g.iter().map(|v| v * scale).collect();
        Ok(Self { beta, tau, g, d })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Unscaled coefficients of `(1 - ζ)^β`.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// `d_j = τ^{-β} g_j`.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn d0(&self) -> f64 {
        self.d[0]
    }

    /// Tail of the convolution at step `n`: `Σ_{i=1}^{n-1} d_i v^{n-i}`, where
    /// `history[k]` holds `v^{k+1}`. The `i = 0` term belongs to the implicit
    /// part of the step and is excluded.
    pub fn history_sum<V: AsRef<[f64]>>(&self, history: &[V], n: usize) -> Result<Vec<f64>> {
        let len = history.first().map_or(0, |v| v.as_ref().len());
        let mut out = vec![0.0; len];
        self.history_sum_into(history, n, &mut out)?;
        Ok(out)
    }

    pub fn history_sum_into<V: AsRef<[f64]>>(&self, history: &[V], n: usize, out: &mut [f64]) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidParameter("step index starts at 1".into()));
        }
        if history.len() < n - 1 {
            return Err(Error::LengthMismatch { expected: n - 1, got: history.len() });
        }
        if self.d.len() < n {
            return Err(Error::LengthMismatch { expected: n, got: self.d.len() });
        }
        for v in &history[..n - 1] {
            if v.as_ref().len() != out.len() {
                return Err(Error::LengthMismatch { expected: out.len(), got: v.as_ref().len() });
            }
        }
        // v^{n-i} = history[n-i-1] for i = 1..n-1
        let vecs: Vec<&[f64]> = (1..n).map(|i| history[n - i - 1].as_ref()).collect();
        par::weighted_sum(out, &self.d[1..n], &vecs);
        Ok(())
    }
}
