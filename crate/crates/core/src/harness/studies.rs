use std::borrow::Cow;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::stats::{exp1_cdf, grid_chi_square, ks_statistic, mean, pearson, qq_pairs, quantile, sd};
use super::{format_number, Metric, StatisticKind, StudyConfig, StudyKind, StudyResult, Table, TextTable};
use crate::covtest::{cov_series_general, cov_series_orthogonal, cov_stat_general, pvalue_exp};
use crate::design::{make_design, simulate_response, DesignMatrix, Family, ResponseSpec};
use crate::error::{Error, Result};
use crate::model_size::{select_k0, SelectorConfig};
use crate::path::{orthogonal_knots, trace_path, PathLimit};
use crate::penalty::PenaltySpec;
use crate::rng::rep_seed;

/// Fewer points than this leave cells of the 4×4 independence grid with an
/// expected count below 5.
const MIN_GRID_REPS: usize = 80;
const GRID_BINS: usize = 4;

struct Sampler<'a> {
    cfg: &'a StudyConfig,
    fixed: Option<DesignMatrix>,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a StudyConfig) -> Result<Self> {
        let fixed = if cfg.fixed_design {
            Some(make_design(cfg.family, cfg.n, cfg.p, cfg.design, rep_seed(cfg.seed, 0))?)
        } else {
            None
        };
        Ok(Sampler { cfg, fixed })
    }

    fn draw(&self, rep: usize, beta_scale: f64) -> Result<(Cow<'_, DesignMatrix>, DVector<f64>)> {
        let cfg = self.cfg;
        let seed = rep_seed(cfg.seed, rep as u64);
        let x = match &self.fixed {
            Some(x) => Cow::Borrowed(x),
            None => Cow::Owned(make_design(cfg.family, cfg.n, cfg.p, cfg.design, seed)?),
        };
        let spec = ResponseSpec {
            beta: cfg.full_beta(beta_scale),
            sigma: cfg.sigma,
            seed,
        };
        let y = simulate_response(&x, &spec)?;
        Ok((x, y))
    }
}

fn replicate<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

fn require_global_null(cfg: &StudyConfig) -> Result<()> {
    if cfg.beta.iter().any(|b| *b != 0.0) {
        return Err(Error::contract(format!(
            "the {} study runs under the global null; beta must be zero",
            cfg.study
        )));
    }
    Ok(())
}

fn sigma2(cfg: &StudyConfig) -> f64 {
    cfg.sigma * cfg.sigma
}

/// `T_1..T_m` under `penalty`. The lasso uses the general two-fit form; the
/// folded concave penalties use the orthonormal closed form and therefore
/// require an orthonormal design.
fn statistics(
    x: &DesignMatrix,
    y: &DVector<f64>,
    m: usize,
    sigma2: f64,
    penalty: PenaltySpec,
) -> Result<Vec<f64>> {
    match penalty {
        PenaltySpec::Lasso => {
            let path = trace_path(&x.values, y, PathLimit::entries(m + 1))?;
            Ok(cov_series_general(&x.values, y, &path, m, sigma2)?.values)
        }
        _ => {
            let v = orthogonal_knots(x, y)?;
            Ok(cov_series_orthogonal(&v, m, sigma2, penalty)?.values)
        }
    }
}

fn cov_penalties(cfg: &StudyConfig) -> Result<Vec<PenaltySpec>> {
    cfg.statistics
        .iter()
        .map(|s| match s {
            StatisticKind::Cov(p) => Ok(*p),
            other => Err(Error::param(format!(
                "statistic {} is not available in the {} study",
                other.label(),
                cfg.study
            ))),
        })
        .collect()
}

fn finish(cfg: &StudyConfig, per_rep: Table, started: Instant) -> Result<StudyResult> {
    let (summary, artifacts) = summarize(cfg, &per_rep)?;
    Ok(StudyResult {
        config: cfg.clone(),
        per_rep,
        summary,
        artifacts,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    match cfg.study {
        StudyKind::NullQq => run_null_qq(cfg),
        StudyKind::Independence => run_independence(cfg),
        StudyKind::Screening => run_screening(cfg),
        StudyKind::Table1 => run_table1(cfg),
        StudyKind::Power => run_power(cfg),
    }
}

/// Null calibration: `T_1..T_d` per replication under the global null.
pub fn run_null_qq(cfg: &StudyConfig) -> Result<StudyResult> {
    let started = Instant::now();
    cfg.validate()?;
    require_global_null(cfg)?;
    let penalties = cov_penalties(cfg)?;
    let sampler = Sampler::new(cfg)?;
    let s2 = sigma2(cfg);

    let mut columns = vec!["rep".to_string()];
    for pen in &penalties {
        for j in 1..=cfg.d {
            columns.push(format!("cov_{}_T{j}", pen.label()));
        }
    }
    let rows = replicate(cfg.n_reps, |rep| {
        let (x, y) = sampler.draw(rep, 0.0)?;
        let mut row = vec![rep as f64];
        for &pen in &penalties {
            row.extend(statistics(&x, &y, cfg.d, s2, pen)?);
        }
        Ok(row)
    })?;
    finish(cfg, Table { columns, rows }, started)
}

/// Pairs of p-values of `T_{k0+1}` and `T_{k0+2}`.
pub fn run_independence(cfg: &StudyConfig) -> Result<StudyResult> {
    let started = Instant::now();
    cfg.validate()?;
    require_global_null(cfg)?;
    let sampler = Sampler::new(cfg)?;
    let s2 = sigma2(cfg);
    let columns = ["rep", "t_first", "t_second", "p_first", "p_second"]
        .map(String::from)
        .to_vec();
    let rows = replicate(cfg.n_reps, |rep| {
        let (x, y) = sampler.draw(rep, 0.0)?;
        let t = statistics(&x, &y, cfg.k0 + 2, s2, PenaltySpec::Lasso)?;
        let (a, b) = (t[cfg.k0], t[cfg.k0 + 1]);
        Ok(vec![
            rep as f64,
            a,
            b,
            pvalue_exp(a.max(0.0), 1)?,
            pvalue_exp(b.max(0.0), 2)?,
        ])
    })?;
    finish(cfg, Table { columns, rows }, started)
}

/// Sure screening of the first `k0` entering variables on the
/// irrepresentable-violating design, with `T_{k0+1}`.
pub fn run_screening(cfg: &StudyConfig) -> Result<StudyResult> {
    let started = Instant::now();
    cfg.validate()?;
    if cfg.family != Family::IrrepViolating {
        return Err(Error::param(format!(
            "the screening study uses the irrep_violating design, got {}",
            cfg.family
        )));
    }
    let support: Vec<usize> = cfg.full_beta(1.0)
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect();
    let sampler = Sampler::new(cfg)?;
    let s2 = sigma2(cfg);
    let columns = ["rep", "sure_screened", "t_next", "entered"]
        .map(String::from)
        .to_vec();
    let rows = replicate(cfg.n_reps, |rep| {
        let (x, y) = sampler.draw(rep, 1.0)?;
        let path = trace_path(&x.values, &y, PathLimit::entries(cfg.k0 + 2))?;
        let entered = path.entered_columns();
        let first: Vec<usize> = entered.iter().copied().take(cfg.k0).collect();
        let screened = support.iter().all(|j| first.contains(j));
        let t_next = match path.entry_knot(cfg.k0 + 1).and_then(|i| path.successor(i)) {
            Some(_) => cov_stat_general(&x.values, &y, &path, cfg.k0 + 1, s2)?,
            None => f64::NAN,
        };
        Ok(vec![
            rep as f64,
            if screened { 1.0 } else { 0.0 },
            t_next,
            entered.len() as f64,
        ])
    })?;
    finish(cfg, Table { columns, rows }, started)
}

/// `Q_k` for `k = k_min..=k_max` and the selected size k̂₀.
pub fn run_table1(cfg: &StudyConfig) -> Result<StudyResult> {
    let started = Instant::now();
    cfg.validate()?;
    let selector = SelectorConfig {
        d: cfg.d,
        k_min: cfg.k_min,
        k_max: cfg.k_max,
    };
    if selector.k_min > selector.k_max {
        return Err(Error::param("k_min must not exceed k_max"));
    }
    let needed = selector.required_len();
    let sampler = Sampler::new(cfg)?;
    let s2 = sigma2(cfg);

    let mut columns = vec!["rep".to_string()];
    columns.extend((cfg.k_min..=cfg.k_max).map(|k| format!("Q{k}")));
    columns.push("k0_hat".into());
    columns.push("excluded".into());
    let width = cfg.k_max - cfg.k_min + 1;

    let rows = replicate(cfg.n_reps, |rep| {
        let (x, y) = sampler.draw(rep, 1.0)?;
        let path = trace_path(&x.values, &y, PathLimit::entries(needed + 1))?;
        let mut row = vec![rep as f64];
        let short = path.entering_events() < needed
            || path.entry_knot(needed).and_then(|i| path.successor(i)).is_none();
        if short {
            row.extend(std::iter::repeat_n(f64::NAN, width + 1));
            row.push(1.0);
            return Ok(row);
        }
        let series = cov_series_general(&x.values, &y, &path, needed, s2)?;
        let sel = select_k0(&series, &selector)?;
        row.extend(sel.q);
        row.push(sel.k0 as f64);
        row.push(0.0);
        Ok(row)
    })?;
    finish(cfg, Table { columns, rows }, started)
}

/// Power of the covariance test and its competitors under
/// `beta = θ·pattern`. The null phase and every θ reuse the same per-rep
/// seeds, so at θ = 0 the alternative sample equals the null sample.
pub fn run_power(cfg: &StudyConfig) -> Result<StudyResult> {
    let started = Instant::now();
    cfg.validate()?;
    let sampler = Sampler::new(cfg)?;
    let s2 = sigma2(cfg);
    let phases = power_phases(cfg);
    let mut columns = vec!["rep".to_string()];
    for (tag, _) in &phases {
        for stat in POWER_COLUMNS {
            columns.push(format!("{stat}@{tag}"));
        }
    }
    // One row per replication; every phase reuses the replication's design
    // and noise.
    let rows = replicate(cfg.n_reps, |rep| {
        let mut row = vec![rep as f64];
        for &(_, theta) in &phases {
            let (x, y) = sampler.draw(rep, theta)?;
            let t = statistics(&x, &y, 2, s2, PenaltySpec::Lasso)?;
            let v1 = x.values.tr_mul(&y).amax();
            row.extend([t[0], t[0].max(t[1]), v1 * v1 / s2, v1]);
        }
        Ok(row)
    })?;
    finish(cfg, Table { columns, rows }, started)
}

const POWER_COLUMNS: [&str; 4] = ["cov_lasso_T1", "max_cov12", "max_rss_drop", "V1"];

/// `("null", 0)` followed by the θ grid.
fn power_phases(cfg: &StudyConfig) -> Vec<(String, f64)> {
    std::iter::once(("null".to_string(), 0.0))
        .chain(cfg.theta_grid.iter().map(|&t| (format_number(t), t)))
        .collect()
}

/// Summary metrics and plot tables, computed from the per-rep table alone.
pub(super) fn summarize(cfg: &StudyConfig, t: &Table) -> Result<(Vec<Metric>, Vec<(String, TextTable)>)> {
    let col = |name: &str| {
        t.column(name)
            .ok_or_else(|| Error::param(format!("per-rep table lacks column `{name}`")))
    };
    let mut summary = Vec::new();
    let mut artifacts = Vec::new();
    let sqrt_n = |v: &[f64]| (v.len() as f64).sqrt();

    match cfg.study {
        StudyKind::NullQq => {
            let mut qq = TextTable::new(&["statistic", "j", "prob", "theoretical_quantile", "empirical_quantile"]);
            for pen in cov_penalties(cfg)? {
                let scale = pen.null_scale();
                for j in 1..=cfg.d {
                    let name = format!("cov_{}_T{j}", pen.label());
                    let v = col(&name)?;
                    summary.push(Metric::with_se(format!("{name}_mean"), mean(&v), sd(&v) / sqrt_n(&v)));
                    summary.push(Metric::new(format!("{name}_sd"), sd(&v)));
                    let scaled: Vec<f64> = v.iter().map(|x| j as f64 * x / scale).collect();
                    let (d, p) = ks_statistic(&scaled, exp1_cdf)?;
                    summary.push(Metric::new(format!("{name}_ks_D"), d));
                    summary.push(Metric::new(format!("{name}_ks_p"), p));
                    for (prob, theory, emp) in
                        qq_pairs(&v, |q| -scale * (1.0 - q).ln() / j as f64)
                    {
                        qq.rows.push(vec![
                            format!("cov_{}", pen.label()),
                            j.to_string(),
                            format_number(prob),
                            format_number(theory),
                            format_number(emp),
                        ]);
                    }
                }
            }
            artifacts.push(("qq".to_string(), qq));
        }
        StudyKind::Independence => {
            let (a, b) = (col("p_first")?, col("p_second")?);
            summary.push(Metric::new("pearson_r", pearson(&a, &b)));
            if a.len() >= MIN_GRID_REPS {
                let (stat, p) = grid_chi_square(&a, &b, GRID_BINS);
                summary.push(Metric::new("chi2_stat", stat));
                summary.push(Metric::new("chi2_p", p));
                summary.push(Metric::new("grid_skipped", 0.0));
            } else {
                summary.push(Metric::new("chi2_stat", f64::NAN));
                summary.push(Metric::new("chi2_p", f64::NAN));
                summary.push(Metric::new("grid_skipped", 1.0));
            }
        }
        StudyKind::Screening => {
            let flags = col("sure_screened")?;
            let frac = mean(&flags);
            summary.push(Metric::with_se(
                "screen_fraction",
                frac,
                (frac * (1.0 - frac) / flags.len() as f64).sqrt(),
            ));
            let all_t = col("t_next")?;
            let pairs: Vec<(f64, f64)> = all_t
                .iter()
                .zip(&flags)
                .filter(|(t, _)| !t.is_nan())
                .map(|(t, f)| (*t, *f))
                .collect();
            let tv: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            summary.push(Metric::new("t_next_count", tv.len() as f64));
            if !tv.is_empty() {
                summary.push(Metric::with_se("t_next_mean", mean(&tv), sd(&tv) / sqrt_n(&tv)));
                let (d, p) = ks_statistic(&tv, exp1_cdf)?;
                summary.push(Metric::new("t_next_ks_D", d));
                summary.push(Metric::new("t_next_ks_p", p));
            }
            let s = cfg.beta.iter().filter(|b| **b != 0.0).count();
            if cfg.k0 > s {
                summary.push(Metric::new("reference_slope", 1.0 / (cfg.k0 - s) as f64));
            }
            let mut sorted = pairs.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut qq = TextTable::new(&["prob", "theoretical_quantile", "empirical_quantile", "sure_screened"]);
            let m = sorted.len() as f64;
            for (i, (t, f)) in sorted.iter().enumerate() {
                let prob = (i as f64 + 0.5) / m;
                qq.rows.push(vec![
                    format_number(prob),
                    format_number(-(1.0 - prob).ln()),
                    format_number(*t),
                    format_number(*f),
                ]);
            }
            artifacts.push(("qq".to_string(), qq));
        }
        StudyKind::Table1 => {
            let excluded = col("excluded")?;
            let keep: Vec<usize> = (0..excluded.len()).filter(|&i| excluded[i] == 0.0).collect();
            let n_keep = keep.len() as f64;
            summary.push(Metric::new("excluded_count", excluded.len() as f64 - n_keep));
            summary.push(Metric::new("included_count", n_keep));
            for k in cfg.k_min..=cfg.k_max {
                let q = col(&format!("Q{k}"))?;
                let v: Vec<f64> = keep.iter().map(|&i| q[i]).collect();
                if v.is_empty() {
                    continue;
                }
                summary.push(Metric::with_se(format!("Q{k}_mean"), mean(&v), sd(&v) / sqrt_n(&v)));
                summary.push(Metric::new(format!("Q{k}_sd"), sd(&v)));
            }
            let khat = col("k0_hat")?;
            for k in cfg.k_min..=cfg.k_max {
                if n_keep == 0.0 {
                    break;
                }
                let hits = keep.iter().filter(|&&i| khat[i] == k as f64).count() as f64;
                let f = hits / n_keep;
                summary.push(Metric::with_se(
                    format!("freq_k0hat_{k}"),
                    f,
                    (f * (1.0 - f) / n_keep).sqrt(),
                ));
            }
        }
        StudyKind::Power => {
            let stats = &POWER_COLUMNS[..3];
            let theory = -cfg.level.ln();
            summary.push(Metric::new("crit_cov_lasso_theory", theory));
            let mut crits = Vec::new();
            for s in stats {
                let c = quantile(&col(&format!("{s}@null"))?, 1.0 - cfg.level);
                summary.push(Metric::new(format!("crit_{s}_sim"), c));
                crits.push(c);
            }
            // (label, statistic column, critical value)
            let tests = [
                ("cov_lasso_theory", stats[0], theory),
                ("cov_lasso_sim", stats[0], crits[0]),
                ("max_cov12_sim", stats[1], crits[1]),
                ("max_rss_drop_sim", stats[2], crits[2]),
            ];
            let mut curve = TextTable::new(&["theta", "statistic", "critical_value", "power"]);
            for (tag, th) in power_phases(cfg).into_iter().skip(1) {
                for (label, s, c) in tests {
                    let v = col(&format!("{s}@{tag}"))?;
                    let m = v.len() as f64;
                    let pw = v.iter().filter(|&&x| x > c).count() as f64 / m;
                    summary.push(Metric::with_se(
                        format!("power_{label}@{tag}"),
                        pw,
                        (pw * (1.0 - pw) / m).sqrt(),
                    ));
                    curve.rows.push(vec![tag.clone(), label.to_string(), format_number(c), format_number(pw)]);
                }
                if th > 0.0 {
                    for (s, name) in [(stats[0], "T1"), ("V1", "V1")] {
                        let v: Vec<f64> = col(&format!("{s}@{tag}"))?.iter().map(|x| x / th).collect();
                        summary.push(Metric::with_se(
                            format!("mean_{name}_over_theta@{tag}"),
                            mean(&v),
                            sd(&v) / sqrt_n(&v),
                        ));
                    }
                }
            }
            artifacts.push(("power".to_string(), curve));
        }
    }
    Ok((summary, artifacts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignParams;

    fn small(study: StudyKind) -> StudyConfig {
        let mut cfg = StudyConfig::defaults(study);
        cfg.n_reps = 6;
        cfg
    }

    #[test]
    fn single_replication_summary_equals_row() {
        let mut cfg = small(StudyKind::NullQq);
        cfg.n_reps = 1;
        let res = run_null_qq(&cfg).unwrap();
        assert_eq!(res.per_rep.rows.len(), 1);
        let t1 = res.per_rep.rows[0][1];
        assert_eq!(res.metric("cov_lasso_T1_mean"), Some(t1));
    }

    #[test]
    fn null_studies_reject_signal() {
        let mut cfg = small(StudyKind::NullQq);
        cfg.beta = vec![1.0];
        assert!(matches!(run_null_qq(&cfg), Err(Error::Contract(_))));
        let mut cfg = small(StudyKind::Independence);
        cfg.beta = vec![0.0, 2.0];
        assert!(matches!(run_independence(&cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn independence_grid_guard() {
        let mut cfg = small(StudyKind::Independence);
        cfg.n_reps = 2;
        let res = run_independence(&cfg).unwrap();
        assert!(res.metric("pearson_r").unwrap().is_finite());
        assert_eq!(res.metric("grid_skipped"), Some(1.0));
    }

    #[test]
    fn scad_requires_orthonormal_design() {
        let mut cfg = small(StudyKind::NullQq);
        cfg.family = Family::EqualCorr;
        cfg.p = 10;
        cfg.statistics = vec![StatisticKind::Cov(PenaltySpec::Scad { a: 3.7 })];
        assert!(matches!(run_null_qq(&cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn screening_degenerate_k0_covers_support() {
        let cfg = StudyConfig {
            n: 60,
            p: 60,
            n_reps: 3,
            k0: 60,
            ..StudyConfig::defaults(StudyKind::Screening)
        };
        let res = run_screening(&cfg).unwrap();
        let entered = res.per_rep.column("entered").unwrap();
        assert!(entered.iter().all(|&e| e >= 6.0));
        assert_eq!(res.metric("screen_fraction"), Some(1.0));
    }

    #[test]
    fn screening_rejects_other_families_and_large_s() {
        let mut cfg = small(StudyKind::Screening);
        cfg.family = Family::IidGaussian;
        assert!(run_screening(&cfg).is_err());
        let mut cfg = small(StudyKind::Screening);
        cfg.design = DesignParams { s: 26, ..cfg.design };
        assert!(matches!(run_screening(&cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn power_rejects_negative_theta() {
        let mut cfg = small(StudyKind::Power);
        cfg.theta_grid = vec![0.0, -1.0];
        assert!(run_power(&cfg).is_err());
        cfg.theta_grid.clear();
        assert!(run_power(&cfg).is_err());
    }

    #[test]
    fn table1_flags_short_paths() {
        let cfg = StudyConfig {
            p: 5,
            n_reps: 3,
            ..StudyConfig::defaults(StudyKind::Table1)
        };
        let res = run_table1(&cfg).unwrap();
        assert_eq!(res.per_rep.rows.len(), 3);
        assert_eq!(res.metric("excluded_count"), Some(3.0));
    }

    #[test]
    fn fixed_design_reuses_one_matrix() {
        let mut cfg = small(StudyKind::NullQq);
        cfg.fixed_design = true;
        let sampler = Sampler::new(&cfg).unwrap();
        let (a, _) = sampler.draw(0, 0.0).unwrap();
        let (b, _) = sampler.draw(3, 0.0).unwrap();
        assert_eq!(a.values, b.values);
        let fresh_cfg = StudyConfig { fixed_design: false, ..cfg.clone() };
        let fresh = Sampler::new(&fresh_cfg).unwrap();
        let (c, _) = fresh.draw(3, 0.0).unwrap();
        assert_ne!(a.values, c.values);
    }
}
