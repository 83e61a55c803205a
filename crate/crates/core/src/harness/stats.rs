//! Goodness-of-fit and summary helpers used by the studies.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Kolmogorov–Smirnov distance of `sample` from `cdf`, with the asymptotic
/// p-value of `√n·D`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::param("KS test needs a nonempty sample"));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::param("KS sample contains NaN"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// `P(K > x)` for the Kolmogorov distribution, series truncated at 100
/// terms.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let sf = if x < 1.18 {
        // Theta-function form converges quickly for small x.
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let cdf: f64 = (1..=100)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * c).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / x;
        1.0 - cdf
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let kf = k as f64;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * kf * kf * x * x).exp()
            })
            .sum::<f64>()
    };
    sf.clamp(0.0, 1.0)
}

pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x).exp()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
pub fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Empirical quantile: the `⌈q·n⌉`-th order statistic.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut xs = v.to_vec();
    xs.sort_by(f64::total_cmp);
    let idx = ((q * xs.len() as f64).ceil() as usize).clamp(1, xs.len()) - 1;
    xs[idx]
}

/// Order statistics paired with plotting positions `(i − 0.5)/n`.
pub fn qq_pairs(sample: &[f64], quantile_fn: impl Fn(f64) -> f64) -> Vec<(f64, f64, f64)> {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let prob = (i as f64 + 0.5) / n;
            (prob, quantile_fn(prob), x)
        })
        .collect()
}

/// Pearson chi-square statistic of points in the unit square against the
/// uniform law on a `bins × bins` grid, with its p-value.
pub fn grid_chi_square(u: &[f64], v: &[f64], bins: usize) -> (f64, f64) {
    let mut counts = vec![0usize; bins * bins];
    let cell = |t: f64| ((t * bins as f64).floor() as usize).min(bins - 1);
    for (a, b) in u.iter().zip(v) {
        counts[cell(a.clamp(0.0, 1.0)) * bins + cell(b.clamp(0.0, 1.0))] += 1;
    }
    let expected = u.len() as f64 / (bins * bins) as f64;
    let stat = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let df = (bins * bins - 1) as f64;
    let p = ChiSquared::new(df).map(|d| d.sf(stat)).unwrap_or(f64::NAN);
    (stat, p)
}
