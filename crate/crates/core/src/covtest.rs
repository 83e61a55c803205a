//! Covariance test statistics along a solution path.
//!
//! For a general design the statistic at the `k`-th entering event is
//!
//! ```text
//! T_k = ( yᵀX·β̂(λ_{k+1}) − yᵀX_A·β̃_A(λ_{k+1}) ) / σ²
//! ```
//!
//! where `λ_{k+1}` is the next knot (0 past the end of the path), `β̂` is the
//! lasso solution on all columns, `A` is the active set just before the
//! variable enters and `β̃_A` is the lasso fit restricted to `A`.
//! On an orthonormal design this reduces to `T_k = V_k·h_{V_{k+1}}(V_k)/σ²`
//! with `V` the sorted `|Xᵀy|` and `h` the penalty's thresholding rule.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::{restricted_lasso_fit, LassoPath};
use crate::penalty::{threshold_unchecked, PenaltySpec};

/// A run of statistics `T_{k_offset+1}, T_{k_offset+2}, …`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovSeries {
    pub values: Vec<f64>,
    pub sigma2: f64,
    pub penalty: PenaltySpec,
    pub k_offset: usize,
}

impl CovSeries {
    pub fn new(values: Vec<f64>, sigma2: f64, penalty: PenaltySpec) -> Self {
        CovSeries {
            values,
            sigma2,
            penalty,
            k_offset: 0,
        }
    }

    /// `T_k` for absolute index `k ≥ 1`.
    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.k_offset + 1)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    /// Largest absolute index available.
    pub fn last_index(&self) -> usize {
        self.k_offset + self.values.len()
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("sigma2 must be positive, got {sigma2}")))
    }
}

/// Statistic at the knot with index `knot_idx` (0-based). Fails with
/// [`Error::DeletionEvent`] if that knot is a deletion.
pub fn cov_stat_at_knot(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    path: &LassoPath,
    knot_idx: usize,
    sigma2: f64,
) -> Result<f64> {
    check_sigma2(sigma2)?;
    let knot = path
        .knots
        .get(knot_idx)
        .ok_or_else(|| Error::param(format!("knot {knot_idx} is beyond the path")))?;
    if !knot.event.is_entry() {
        return Err(Error::DeletionEvent(knot_idx + 1));
    }
    let xty = x.tr_mul(y);
    stat_with_xty(x, y, &xty, path, knot_idx, sigma2)
}

fn stat_with_xty(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xty: &DVector<f64>,
    path: &LassoPath,
    knot_idx: usize,
    sigma2: f64,
) -> Result<f64> {
    let (next_lambda, full) = path.successor(knot_idx).ok_or_else(|| {
        Error::param(format!(
            "path was truncated at knot {}; compute at least one more step",
            knot_idx + 1
        ))
    })?;
    let inner = |coef: &[f64]| -> f64 {
        coef.iter()
            .zip(xty.iter())
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, g)| c * g)
            .sum()
    };
    let subset = &path.knots[knot_idx].active_before;
    let restricted = if subset.is_empty() {
        0.0
    } else {
        inner(&restricted_lasso_fit(x, y, subset, next_lambda)?)
    };
    Ok((inner(full) - restricted) / sigma2)
}

/// `T_k` for the `k`-th entering event (1-based) on a general design.
pub fn cov_stat_general(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    path: &LassoPath,
    k: usize,
    sigma2: f64,
) -> Result<f64> {
    check_sigma2(sigma2)?;
    let idx = path.entry_knot(k).ok_or_else(|| {
        Error::param(format!(
            "k = {k} is out of range: the path has {} entering events",
            path.entering_events()
        ))
    })?;
    let xty = x.tr_mul(y);
    stat_with_xty(x, y, &xty, path, idx, sigma2)
}

/// `T_1..T_m` on a general design (lasso penalty).
pub fn cov_series_general(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    path: &LassoPath,
    m: usize,
    sigma2: f64,
) -> Result<CovSeries> {
    check_sigma2(sigma2)?;
    let xty = x.tr_mul(y);
    let mut values = Vec::with_capacity(m);
    for k in 1..=m {
        let idx = path.entry_knot(k).ok_or_else(|| {
            Error::param(format!(
                "path has {} entering events, {m} statistics requested",
                path.entering_events()
            ))
        })?;
        values.push(stat_with_xty(x, y, &xty, path, idx, sigma2)?);
    }
    Ok(CovSeries::new(values, sigma2, PenaltySpec::Lasso))
}

fn check_descending(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::contract("knot values must be nonnegative"));
    }
    if v.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::contract("knot values must be in decreasing order"));
    }
    Ok(())
}

/// `V_k·h_{V_{k+1}}(V_k)/σ²` for an orthonormal design, with `V_{k+1} = 0`
/// at the end of `v`.
pub fn cov_stat_orthogonal(v: &[f64], k: usize, sigma2: f64, penalty: PenaltySpec) -> Result<f64> {
    penalty.validate()?;
    check_sigma2(sigma2)?;
    check_descending(v)?;
    if k == 0 || k > v.len() {
        return Err(Error::param(format!("k must lie in 1..={}, got {k}", v.len())));
    }
    Ok(orthogonal_unchecked(v, k, sigma2, penalty))
}

fn orthogonal_unchecked(v: &[f64], k: usize, sigma2: f64, penalty: PenaltySpec) -> f64 {
    let vk = v[k - 1];
    let next = v.get(k).copied().unwrap_or(0.0);
    vk * threshold_unchecked(penalty, next, vk) / sigma2
}

/// `T_1..T_m` from sorted knot values.
pub fn cov_series_orthogonal(
    v: &[f64],
    m: usize,
    sigma2: f64,
    penalty: PenaltySpec,
) -> Result<CovSeries> {
    penalty.validate()?;
    check_sigma2(sigma2)?;
    check_descending(v)?;
    if m > v.len() {
        return Err(Error::param(format!(
            "{m} statistics requested from {} knot values",
            v.len()
        )));
    }
    let values = (1..=m)
        .map(|k| orthogonal_unchecked(v, k, sigma2, penalty))
        .collect();
    Ok(CovSeries::new(values, sigma2, penalty))
}

/// Three-branch SCAD statistic written directly in terms of the knots:
/// the lasso form when `V_k ≤ 2V_{k+1}`, `V_k²` when `V_k ≥ aV_{k+1}`, and
/// `(a−1)/(a−2)·V_k·(V_k − a/(a−2)·V_{k+1})` in between.
pub fn scad_stat_piecewise(vk: f64, next: f64, a: f64, sigma2: f64) -> f64 {
    let t = if vk <= 2.0 * next {
        vk * (vk - next)
    } else if vk < a * next {
        (a - 1.0) / (a - 2.0) * vk * (vk - a / (a - 1.0) * next)
    } else {
        vk * vk
    };
    t / sigma2
}

/// Upper-tail probability of Exp(1)/j at `t`.
pub fn pvalue_exp(t: f64, j: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::param(format!("statistic must be >= 0, got {t}")));
    }
    if j == 0 {
        return Err(Error::param("j must be positive"));
    }
    Ok((-(j as f64) * t).exp())
}

/// `(1·T_{k0+1}, 2·T_{k0+2}, …, d·T_{k0+d})`.
pub fn tilde_transform(series: &CovSeries, k0: usize, d: usize) -> Result<Vec<f64>> {
    (1..=d)
        .map(|j| {
            series.get(k0 + j).map(|t| j as f64 * t).ok_or_else(|| {
                Error::param(format!(
                    "series covers T_{}..T_{}, T_{} requested",
                    series.k_offset + 1,
                    series.last_index(),
                    k0 + j
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_design, simulate_response, DesignParams, Family, ResponseSpec};
    use crate::path::{orthogonal_knots, trace_path, PathLimit};
    use crate::penalty::threshold_oracle;
    use proptest::prelude::*;

    #[test]
    fn orthogonal_examples() {
        let scad = PenaltySpec::Scad { a: 3.7 };
        assert_eq!(cov_stat_orthogonal(&[3.0, 2.0], 1, 1.0, scad).unwrap(), 3.0);
        assert_eq!(cov_stat_orthogonal(&[5.0, 1.0], 1, 1.0, scad).unwrap(), 25.0);
        assert_eq!(cov_stat_orthogonal(&[5.0, 3.0], 1, 1.0, PenaltySpec::Lasso).unwrap(), 10.0);

        let middle = cov_stat_orthogonal(&[3.0, 1.0], 1, 1.0, scad).unwrap();
        let display = scad_stat_piecewise(3.0, 1.0, 3.7, 1.0);
        let via_oracle = 3.0 * threshold_oracle(scad, 1.0, 3.0, 4.0, 1e-4).unwrap();
        let hand = 3.0 * (2.7 * 3.0 - 3.7) / 1.7;
        assert!((middle - hand).abs() < 1e-12);
        assert!((display - hand).abs() < 1e-12);
        assert!((via_oracle - hand).abs() < 1e-6);
        assert!((hand - 7.764706).abs() < 1e-6);
    }

    #[test]
    fn piecewise_form_is_continuous() {
        for a in [2.5, 3.7, 6.0] {
            let next = 1.3;
            let at = |vk: f64| scad_stat_piecewise(vk, next, a, 1.0);
            let h = 1e-9;
            assert!((at(2.0 * next - h) - at(2.0 * next + h)).abs() < 1e-7);
            assert!((at(a * next - h) - at(a * next + h)).abs() < 1e-7);
        }
    }

    #[test]
    fn last_statistic_uses_zero_successor() {
        let t = cov_stat_orthogonal(&[4.0, 2.0], 2, 1.0, PenaltySpec::Lasso).unwrap();
        assert_eq!(t, 4.0);
    }

    #[test]
    fn orthogonal_errors() {
        assert!(matches!(
            cov_stat_orthogonal(&[1.0, 2.0], 1, 1.0, PenaltySpec::Lasso),
            Err(Error::Contract(_))
        ));
        assert!(cov_stat_orthogonal(&[2.0, 1.0], 3, 1.0, PenaltySpec::Lasso).is_err());
        assert!(cov_stat_orthogonal(&[2.0, 1.0], 1, 0.0, PenaltySpec::Lasso).is_err());
    }

    #[test]
    fn general_matches_orthogonal_closed_form() {
        for seed in 0..10 {
            let x = make_design(Family::Orthogonal, 60, 15, DesignParams::default(), seed).unwrap();
            let mut beta = vec![0.0; 15];
            beta[0] = 3.0;
            let y = simulate_response(&x, &ResponseSpec { beta, sigma: 1.0, seed }).unwrap();
            let path = trace_path(&x.values, &y, PathLimit::entries(8)).unwrap();
            let v = orthogonal_knots(&x, &y).unwrap();
            for k in 1..8 {
                let g = cov_stat_general(&x.values, &y, &path, k, 1.0).unwrap();
                let o = cov_stat_orthogonal(&v, k, 1.0, PenaltySpec::Lasso).unwrap();
                assert!((g - o).abs() < 1e-8, "seed {seed} k {k}: {g} vs {o}");
            }
            let t1 = v[0] * (v[0] - v[1]);
            assert!((cov_stat_general(&x.values, &y, &path, 1, 1.0).unwrap() - t1).abs() < 1e-8);
            // Truncated after the 8th entry: T_8 has no successor.
            assert!(cov_stat_general(&x.values, &y, &path, 8, 1.0).is_err());
            assert!(cov_stat_general(&x.values, &y, &path, 9, 1.0).is_err());
        }
    }

    #[test]
    fn zero_gap_gives_zero() {
        let x = crate::design::DesignMatrix::from_values(DMatrix::identity(4, 3), Family::Orthogonal)
            .unwrap();
        let y = DVector::from_vec(vec![3.0, -3.0, 1.0, 0.0]);
        let path = trace_path(&x.values, &y, PathLimit::steps(10)).unwrap();
        let t = cov_stat_general(&x.values, &y, &path, 1, 1.0).unwrap();
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn deletion_knot_is_rejected() {
        for seed in 0..60 {
            let x = make_design(Family::EqualCorr, 30, 20, DesignParams { rho: 0.9, ..Default::default() }, seed)
                .unwrap();
            let beta: Vec<f64> = (0..20)
                .map(|j| match j % 3 { 0 => 3.0, 1 => -2.0, _ => 0.0 })
                .collect();
            let y = simulate_response(&x, &ResponseSpec { beta, sigma: 1.0, seed }).unwrap();
            let path = trace_path(&x.values, &y, PathLimit::steps(60)).unwrap();
            if let Some(i) = path.knots.iter().position(|k| !k.event.is_entry()) {
                let err = cov_stat_at_knot(&x.values, &y, &path, i, 1.0).unwrap_err();
                assert!(matches!(err, Error::DeletionEvent(n) if n == i + 1));
                return;
            }
        }
        panic!("no deletion generated");
    }

    #[test]
    fn pvalues() {
        for j in 1..5 {
            assert_eq!(pvalue_exp(0.0, j).unwrap(), 1.0);
        }
        assert!((pvalue_exp(std::f64::consts::LN_2, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((pvalue_exp(1.0, 3).unwrap() - 0.049787068367863944).abs() < 1e-15);
        assert!(pvalue_exp(-0.1, 1).is_err());
    }

    #[test]
    fn pvalue_matches_simulated_tail() {
        use rand::Rng;
        use rand_distr::Exp1;
        let mut rng = crate::rng::stream(99, 0);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| rng.sample::<f64, _>(Exp1) / 3.0 > 1.0)
            .count();
        let empirical = hits as f64 / n as f64;
        let se = (0.05 * 0.95 / n as f64).sqrt();
        assert!((empirical - pvalue_exp(1.0, 3).unwrap()).abs() < 4.0 * se);
    }

    #[test]
    fn tilde_examples() {
        let s = CovSeries::new(vec![2.0, 0.5, 0.1], 1.0, PenaltySpec::Lasso);
        let t = tilde_transform(&s, 0, 3).unwrap();
        assert_eq!(t[0], 2.0);
        assert_eq!(t[1], 1.0);
        assert!((t[2] - 0.3).abs() < 1e-15);
        assert_eq!(tilde_transform(&s, 1, 1).unwrap(), vec![0.5]);
        assert!(tilde_transform(&s, 1, 3).is_err());
    }

    proptest! {
        #[test]
        fn scad_equals_lasso_on_small_gaps(next in 0.01f64..10.0, ratio in 1.0f64..2.0, a in 2.01f64..10.0) {
            let vk = next * ratio;
            let scad = cov_stat_orthogonal(&[vk, next], 1, 1.0, PenaltySpec::Scad { a }).unwrap();
            let lasso = cov_stat_orthogonal(&[vk, next], 1, 1.0, PenaltySpec::Lasso).unwrap();
            prop_assert_eq!(scad, lasso);
        }

        #[test]
        fn scale_equivariance(c in 0.1f64..10.0, seed in 0u64..1000) {
            let x = make_design(Family::Orthogonal, 30, 8, DesignParams::default(), seed).unwrap();
            let y = simulate_response(&x, &ResponseSpec { beta: vec![0.0; 8], sigma: 1.0, seed }).unwrap();
            let v = orthogonal_knots(&x, &y).unwrap();
            let vc = orthogonal_knots(&x, &(&y * c)).unwrap();
            for pen in [PenaltySpec::Lasso, PenaltySpec::Scad { a: 3.7 }, PenaltySpec::Mcp { gamma: 3.0 }] {
                for k in 1..=8 {
                    let t = cov_stat_orthogonal(&v, k, 1.0, pen).unwrap();
                    let tc = cov_stat_orthogonal(&vc, k, c * c, pen).unwrap();
                    prop_assert!((t - tc).abs() <= 1e-10 * t.abs().max(1.0));
                }
            }
        }

        #[test]
        fn mcp_middle_branch_scaling(lambda in 0.1f64..5.0, frac in 0.001f64..1.0, gamma in 1.05f64..8.0) {
            let x = lambda + frac * (gamma - 1.0) * lambda;
            let h = threshold_unchecked(PenaltySpec::Mcp { gamma }, lambda, x);
            let lhs = x * h;
            let rhs = gamma / (gamma - 1.0) * x * (x - lambda);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }
}
