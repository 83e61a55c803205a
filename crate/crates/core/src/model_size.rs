//! Data-driven choice of the model size k̂₀.
//!
//! When `k₀` is the true size, `j·T_{k₀+j}` for `j = 1..d` behave like i.i.d.
//! Exp(1) draws, so their window average `Q_{k₀}` sits near 1. The selector
//! picks the `k` whose window average is closest to 1.

use serde::{Deserialize, Serialize};

use crate::covtest::CovSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub d: usize,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            d: 6,
            k_min: 0,
            k_max: 4,
        }
    }
}

impl SelectorConfig {
    /// Number of statistics the selector reads: `T_1..T_{k_max+d}`.
    pub fn required_len(&self) -> usize {
        self.k_max + self.d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub k0: usize,
    /// `Q_k` for `k = k_min..=k_max`.
    pub q: Vec<f64>,
    /// Set when the series was built from a non-lasso penalty; the selector
    /// is only justified for the lasso null law.
    pub penalty_warning: bool,
}

/// `Q_k = (1/d)·Σ_{j=1..d} j·T_{k+j}`.
pub fn q_statistic(series: &CovSeries, k: usize, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::param("window length d must be positive"));
    }
    let mut sum = 0.0;
    for j in 1..=d {
        let t = series.get(k + j).ok_or_else(|| {
            Error::param(format!(
                "Q_{k} with d = {d} needs T_{}, series ends at T_{}",
                k + j,
                series.last_index()
            ))
        })?;
        sum += j as f64 * t;
    }
    Ok(sum / d as f64)
}

/// argmin over `k ∈ [k_min, k_max]` of `|Q_k − 1|`, smallest `k` on ties.
pub fn select_k0(series: &CovSeries, cfg: &SelectorConfig) -> Result<Selection> {
    if cfg.k_min > cfg.k_max {
        return Err(Error::param(format!(
            "empty search range k_min = {} > k_max = {}",
            cfg.k_min, cfg.k_max
        )));
    }
    let q = (cfg.k_min..=cfg.k_max)
        .map(|k| q_statistic(series, k, cfg.d))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if (v - 1.0).abs() < (q[best] - 1.0).abs() {
            best = i;
        }
    }
    Ok(Selection {
        k0: cfg.k_min + best,
        q,
        penalty_warning: !series.penalty.is_lasso(),
    })
}

fn harmonic_tail(d: usize) -> f64 {
    (1..=d).map(|j| 1.0 / (j as f64 + 1.0)).sum()
}

/// `E(Q_{k₀+1}) = 1 − (1/d)·Σ_{j=1..d} 1/(j+1)` at the true size `k₀`.
pub fn expected_q_after(d: usize) -> f64 {
    assert!(d >= 1, "d must be positive");
    1.0 - harmonic_tail(d) / d as f64
}

/// Signal-to-noise ratio `E(Q_{k₀} − Q_{k₀+1}) / sd(Q_{k₀} − Q_{k₀+1})`:
/// `Σ_{j=1..d} 1/(j+1)` over `(Σ_{j=1..d} 1/j² + d²/(d+1)²)^{1/2}`.
pub fn snr(d: usize) -> f64 {
    assert!(d >= 1, "d must be positive");
    let df = d as f64;
    let squares: f64 = (1..=d).map(|j| 1.0 / (j as f64).powi(2)).sum();
    harmonic_tail(d) / (squares + df * df / ((df + 1.0) * (df + 1.0))).sqrt()
}
