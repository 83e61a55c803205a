//! Design matrix families and Gaussian response simulation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Number of trailing columns built from the parent variables in the
/// irrepresentable-violating family.
pub const IRREP_TAIL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Orthogonal,
    EqualCorr,
    Ar1,
    BlockDiag,
    IrrepViolating,
    IidGaussian,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Orthogonal,
        Family::EqualCorr,
        Family::Ar1,
        Family::BlockDiag,
        Family::IrrepViolating,
        Family::IidGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Orthogonal => "orthogonal",
            Family::EqualCorr => "equal_corr",
            Family::Ar1 => "ar1",
            Family::BlockDiag => "block_diag",
            Family::IrrepViolating => "irrep_violating",
            Family::IidGaussian => "iid_gaussian",
        }
    }

    fn uses_rho(self) -> bool {
        matches!(self, Family::EqualCorr | Family::Ar1 | Family::BlockDiag)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .or(match norm.as_str() {
                "irrep" => Some(Family::IrrepViolating),
                "iid" | "gaussian" => Some(Family::IidGaussian),
                "equal" | "equicorrelated" => Some(Family::EqualCorr),
                "block" => Some(Family::BlockDiag),
                _ => None,
            })
            .ok_or_else(|| Error::param(format!("unknown design family `{s}`")))
    }
}

/// Family parameters. Fields irrelevant to a family are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub rho: f64,
    pub block_size: usize,
    pub s: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        DesignParams {
            rho: 0.8,
            block_size: 5,
            s: 6,
        }
    }
}

/// An n×p design with its generation metadata. Columns have unit ℓ2 norm.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub family: Family,
    pub params: DesignParams,
    pub seed: u64,
}

impl DesignMatrix {
    /// Wraps an externally supplied matrix (e.g. read from disk). Columns
    /// are standardized.
    pub fn from_values(mut values: DMatrix<f64>, family: Family) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 1 {
            return Err(Error::param("design needs n >= 2 and p >= 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("design contains non-finite entries"));
        }
        standardize_columns(&mut values);
        Ok(DesignMatrix {
            values,
            family,
            params: DesignParams::default(),
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Largest entrywise deviation of XᵀX from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.values.tr_mul(&self.values);
        let mut worst = 0.0_f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

fn validate(family: Family, n: usize, p: usize, params: &DesignParams) -> Result<()> {
    if n < 2 {
        return Err(Error::param(format!("n must be at least 2, got {n}")));
    }
    if p < 1 {
        return Err(Error::param("p must be at least 1"));
    }
    if family.uses_rho() && !(0.0..1.0).contains(&params.rho) {
        return Err(Error::param(format!(
            "rho must lie in [0, 1) for {family}, got {}",
            params.rho
        )));
    }
    match family {
        Family::Orthogonal if n < p => Err(Error::param(format!(
            "orthogonal design requires n >= p (n={n}, p={p})"
        ))),
        Family::BlockDiag if params.block_size == 0 => {
            Err(Error::param("block_size must be positive"))
        }
        Family::IrrepViolating => {
            if p <= IRREP_TAIL {
                Err(Error::param(format!(
                    "irrep_violating design requires p > {IRREP_TAIL}, got {p}"
                )))
            } else if params.s == 0 || params.s > 25 {
                Err(Error::param(format!(
                    "irrep_violating design requires 1 <= s <= 25, got {}",
                    params.s
                )))
            } else if params.s > p - IRREP_TAIL {
                Err(Error::param(format!(
                    "irrep_violating design requires s <= p - {IRREP_TAIL}"
                )))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// Population covariance of the rows for the correlated families.
pub fn population_covariance(
    family: Family,
    p: usize,
    params: &DesignParams,
) -> Option<DMatrix<f64>> {
    let rho = params.rho;
    match family {
        Family::EqualCorr => Some(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                rho
            }
        })),
        Family::Ar1 => Some(DMatrix::from_fn(p, p, |i, j| {
            rho.powi(i.abs_diff(j) as i32)
        })),
        Family::BlockDiag => {
            let b = params.block_size.max(1);
            Some(DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    1.0
                } else if i / b == j / b {
                    rho
                } else {
                    0.0
                }
            }))
        }
        _ => None,
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize, p: usize) -> DMatrix<f64> {
    // Column-major fill: column j consumes draws j*n .. (j+1)*n.
    DMatrix::from_iterator(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Scales every column to unit ℓ2 norm. Zero columns are left untouched.
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Draws a design matrix of the given family, standardized to unit-norm
/// columns. Deterministic in `(family, n, p, params, seed)`.
pub fn make_design(
    family: Family,
    n: usize,
    p: usize,
    params: DesignParams,
    seed: u64,
) -> Result<DesignMatrix> {
    validate(family, n, p, &params)?;
    let mut rng = rng::stream(seed, rng::DESIGN_STREAM);
    let z = gaussian_matrix(&mut rng, n, p);

    let mut values = match family {
        Family::IidGaussian => z,
        Family::Orthogonal => z.qr().q(),
        Family::EqualCorr | Family::Ar1 | Family::BlockDiag => {
            let sigma = population_covariance(family, p, &params).expect("correlated family");
            let chol = sigma
                .cholesky()
                .ok_or_else(|| Error::param("population covariance is not positive definite"))?;
            z * chol.l().transpose()
        }
        Family::IrrepViolating => {
            let mut x = z;
            let s = params.s;
            let noise_scale = ((25 - s) as f64).sqrt() / 5.0;
            for k in (p - IRREP_TAIL)..p {
                let mut col = x.column(k) * noise_scale;
                for j in 0..s {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    col.axpy(sign / 5.0, &x.column(j), 1.0);
                }
                x.set_column(k, &col);
            }
            x
        }
    };
    standardize_columns(&mut values);

    Ok(DesignMatrix {
        values,
        family,
        params,
        seed,
    })
}

/// True coefficients, noise level and noise seed of a Gaussian linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl ResponseSpec {
    pub fn is_global_null(&self) -> bool {
        self.beta.iter().all(|&b| b == 0.0)
    }
}

/// `y = X·beta + sigma·z` with `z` drawn from the seed's noise stream.
pub fn simulate_response(x: &DesignMatrix, spec: &ResponseSpec) -> Result<DVector<f64>> {
    if spec.beta.len() != x.p() {
        return Err(Error::param(format!(
            "beta has length {} but the design has {} columns",
            spec.beta.len(),
            x.p()
        )));
    }
    if !(spec.sigma > 0.0) || !spec.sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {}", spec.sigma)));
    }
    let mut rng = rng::stream(spec.seed, rng::NOISE_STREAM);
    let mut y = DVector::from_iterator(
        x.n(),
        (0..x.n()).map(|_| spec.sigma * rng.sample::<f64, _>(StandardNormal)),
    );
    for (j, &b) in spec.beta.iter().enumerate() {
        if b != 0.0 {
            y.axpy(b, &x.values.column(j), 1.0);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_norms(x: &DMatrix<f64>) -> Vec<f64> {
        x.column_iter().map(|c| c.norm()).collect()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn ar1_population_entry() {
        let params = DesignParams {
            rho: 0.8,
            ..Default::default()
        };
        let sigma = population_covariance(Family::Ar1, 10, &params).unwrap();
        assert!((sigma[(0, 2)] - 0.64).abs() < 1e-15);
        let x = make_design(Family::Ar1, 100, 10, params, 1).unwrap();
        assert_eq!((x.n(), x.p()), (100, 10));
    }

    #[test]
    fn orthogonal_gram_is_identity() {
        let x = make_design(Family::Orthogonal, 100, 10, DesignParams::default(), 1).unwrap();
        assert!(x.orthonormality_error() < 1e-10);
    }

    #[test]
    fn every_family_has_unit_columns() {
        for family in Family::ALL {
            let (n, p) = if family == Family::IrrepViolating {
                (80, 60)
            } else {
                (40, 12)
            };
            let x = make_design(family, n, p, DesignParams::default(), 3).unwrap();
            for norm in column_norms(&x.values) {
                assert!((norm - 1.0).abs() < 1e-10, "{family}: norm {norm}");
            }
        }
    }

    #[test]
    fn standardization_is_idempotent() {
        let x = make_design(Family::EqualCorr, 50, 8, DesignParams::default(), 9).unwrap();
        let mut again = x.values.clone();
        standardize_columns(&mut again);
        let diff = (&again - &x.values).abs().max();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn irrep_tail_tracks_signed_parent_average() {
        let params = DesignParams {
            s: 6,
            ..Default::default()
        };
        let x = make_design(Family::IrrepViolating, 600, 2000, params, 7).unwrap();
        let signed: Vec<f64> = (0..600)
            .map(|i| {
                (0..6)
                    .map(|j| if j % 2 == 0 { x.values[(i, j)] } else { -x.values[(i, j)] })
                    .sum::<f64>()
                    / 5.0
            })
            .collect();
        // Column 1951 (1-based) is the first tail column.
        let tail: Vec<f64> = x.values.column(1950).iter().copied().collect();
        // Population correlation is sqrt(s)/5 ≈ 0.49 with the unit-variance
        // average; the signed sum (not average) gives the same correlation.
        let r = corr(&tail, &signed);
        let theory = (6.0_f64).sqrt() / 5.0;
        assert!((r - theory).abs() < 0.1, "r = {r}, theory = {theory}");
        // Columns before the tail are not built from the parents.
        let head: Vec<f64> = x.values.column(100).iter().copied().collect();
        assert!(corr(&head, &signed).abs() < 0.15);
    }

    #[test]
    fn equal_corr_mean_offdiagonal() {
        let params = DesignParams {
            rho: 0.8,
            ..Default::default()
        };
        let x = make_design(Family::EqualCorr, 100, 10, params, 2).unwrap();
        let cols: Vec<Vec<f64>> = x
            .values
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..10 {
            for j in (i + 1)..10 {
                total += corr(&cols[i], &cols[j]);
                count += 1;
            }
        }
        assert_eq!(count, 45);
        let mean = total / 45.0;
        assert!((0.7..=0.9).contains(&mean), "mean corr {mean}");
    }

    #[test]
    fn ar1_law_of_large_numbers() {
        let params = DesignParams {
            rho: 0.8,
            ..Default::default()
        };
        let x = make_design(Family::Ar1, 10_000, 10, params, 11).unwrap();
        let g = x.values.tr_mul(&x.values);
        assert!((g[(0, 1)] - 0.8).abs() < 0.03, "gram(1,2) = {}", g[(0, 1)]);
    }

    #[test]
    fn parameter_errors() {
        let bad_rho = DesignParams {
            rho: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            make_design(Family::EqualCorr, 10, 3, bad_rho, 0),
            Err(Error::Parameter(_))
        ));
        assert!(make_design(Family::Orthogonal, 5, 10, DesignParams::default(), 0).is_err());
        let big_s = DesignParams {
            s: 26,
            ..Default::default()
        };
        assert!(make_design(Family::IrrepViolating, 100, 200, big_s, 0).is_err());
        assert!(make_design(Family::IrrepViolating, 100, 50, DesignParams::default(), 0).is_err());
        assert!(make_design(Family::IidGaussian, 1, 3, DesignParams::default(), 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_design(Family::BlockDiag, 30, 9, DesignParams::default(), 5).unwrap();
        let b = make_design(Family::BlockDiag, 30, 9, DesignParams::default(), 5).unwrap();
        assert_eq!(a.values, b.values);
        let spec = ResponseSpec {
            beta: vec![1.0; 9],
            sigma: 1.0,
            seed: 17,
        };
        let y1 = simulate_response(&a, &spec).unwrap();
        let y2 = simulate_response(&a, &spec).unwrap();
        assert!(y1.iter().zip(y2.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn null_response_is_centered_noise() {
        let x = make_design(Family::IidGaussian, 400, 5, DesignParams::default(), 1).unwrap();
        let spec = ResponseSpec {
            beta: vec![0.0; 5],
            sigma: 1.0,
            seed: 2,
        };
        assert!(spec.is_global_null());
        let y = simulate_response(&x, &spec).unwrap();
        assert!(y.mean().abs() < 4.0 / (400.0_f64).sqrt());
    }

    #[test]
    fn strong_signals_dominate_marginal_correlation() {
        let mut hits = 0;
        for rep in 0..100u64 {
            let x = make_design(Family::IidGaussian, 500, 10, DesignParams::default(), rep).unwrap();
            let mut beta = vec![0.0; 10];
            beta[0] = 6.0;
            beta[1] = 6.0;
            let spec = ResponseSpec {
                beta,
                sigma: 1.0,
                seed: rep,
            };
            let y = simulate_response(&x, &spec).unwrap();
            let xty = x.values.tr_mul(&y);
            let arg = xty.abs().argmax().0;
            if arg < 2 {
                hits += 1;
            }
        }
        assert!(hits >= 99, "hits = {hits}");
    }

    #[test]
    fn response_dimension_mismatch() {
        let x = make_design(Family::IidGaussian, 10, 3, DesignParams::default(), 1).unwrap();
        let spec = ResponseSpec {
            beta: vec![0.0; 4],
            sigma: 1.0,
            seed: 0,
        };
        assert!(simulate_response(&x, &spec).is_err());
    }
}
