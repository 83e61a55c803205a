//! Scalar penalties p_λ and their thresholding rules
//! h_λ(x) = argmin_u ½(u − x)² + p_λ(u).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    Lasso,
    Scad { a: f64 },
    Mcp { gamma: f64 },
}

impl PenaltySpec {
    pub fn scad(a: f64) -> Result<Self> {
        let spec = PenaltySpec::Scad { a };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mcp(gamma: f64) -> Result<Self> {
        let spec = PenaltySpec::Mcp { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltySpec::Lasso => Ok(()),
            PenaltySpec::Scad { a } if a > 2.0 && a.is_finite() => Ok(()),
            PenaltySpec::Scad { a } => Err(Error::param(format!("SCAD requires a > 2, got {a}"))),
            PenaltySpec::Mcp { gamma } if gamma > 1.0 && gamma.is_finite() => Ok(()),
            PenaltySpec::Mcp { gamma } => Err(Error::param(format!(
                "MCP requires gamma > 1, got {gamma}"
            ))),
        }
    }

    pub fn is_lasso(&self) -> bool {
        matches!(self, PenaltySpec::Lasso)
    }

    /// Short label used in CSV column names: `lasso`, `scad`, `mcp`.
    pub fn label(&self) -> &'static str {
        match self {
            PenaltySpec::Lasso => "lasso",
            PenaltySpec::Scad { .. } => "scad",
            PenaltySpec::Mcp { .. } => "mcp",
        }
    }

    /// Asymptotic scale of the null covariance statistics relative to the
    /// lasso: 1 for lasso and SCAD, γ/(γ−1) for MCP.
    pub fn null_scale(&self) -> f64 {
        match *self {
            PenaltySpec::Mcp { gamma } => gamma / (gamma - 1.0),
            _ => 1.0,
        }
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltySpec::Lasso => write!(f, "lasso"),
            PenaltySpec::Scad { a } => write!(f, "scad(a={a})"),
            PenaltySpec::Mcp { gamma } => write!(f, "mcp(gamma={gamma})"),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("lambda must be a finite value >= 0, got {lambda}")))
    }
}

/// p_λ(|u|).
pub fn penalty_value(spec: PenaltySpec, lambda: f64, u: f64) -> Result<f64> {
    spec.validate()?;
    check_lambda(lambda)?;
    let t = u.abs();
    let value = match spec {
        PenaltySpec::Lasso => lambda * t,
        PenaltySpec::Scad { a } => {
            if t <= lambda {
                lambda * t
            } else if t <= a * lambda {
                (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
            } else {
                (a + 1.0) * lambda * lambda / 2.0
            }
        }
        PenaltySpec::Mcp { gamma } => {
            if t <= gamma * lambda {
                lambda * t - t * t / (2.0 * gamma)
            } else {
                gamma * lambda * lambda / 2.0
            }
        }
    };
    Ok(value)
}

#[inline]
fn soft(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

/// Closed-form thresholding rule h_λ(x).
pub fn threshold(spec: PenaltySpec, lambda: f64, x: f64) -> Result<f64> {
    spec.validate()?;
    check_lambda(lambda)?;
    Ok(threshold_unchecked(spec, lambda, x))
}

pub(crate) fn threshold_unchecked(spec: PenaltySpec, lambda: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let t = x.abs();
    let sign = x.signum();
    match spec {
        PenaltySpec::Lasso => soft(x, lambda),
        PenaltySpec::Scad { a } => {
            if t <= 2.0 * lambda {
                soft(x, lambda)
            } else if t <= a * lambda {
                sign * ((a - 1.0) * t - a * lambda) / (a - 2.0)
            } else {
                x
            }
        }
        PenaltySpec::Mcp { gamma } => {
            if t <= lambda {
                0.0
            } else if t <= gamma * lambda {
                sign * gamma * (t - lambda) / (gamma - 1.0)
            } else {
                x
            }
        }
    }
}

/// Brute-force minimizer of ½(u − x)² + p_λ(u): exhaustive grid over
/// `[x − half_width, x + half_width] ∪ {0}` followed by a ternary search in
/// the bracket around the best grid point.
pub fn threshold_oracle(
    spec: PenaltySpec,
    lambda: f64,
    x: f64,
    half_width: f64,
    step: f64,
) -> Result<f64> {
    spec.validate()?;
    check_lambda(lambda)?;
    if !(half_width > 0.0 && step > 0.0) {
        return Err(Error::param("half_width and step must be positive"));
    }
    let objective = |u: f64| {
        0.5 * (u - x) * (u - x) + penalty_value(spec, lambda, u).expect("validated")
    };

    let steps = (2.0 * half_width / step).ceil() as usize;
    let lo = x - half_width;
    let mut best_u = 0.0;
    let mut best_f = objective(0.0);
    for i in 0..=steps {
        let u = (lo + i as f64 * step).min(x + half_width);
        let f = objective(u);
        if f < best_f {
            best_f = f;
            best_u = u;
        }
    }

    let (mut a, mut b) = (best_u - step, best_u + step);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if objective(m1) <= objective(m2) {
            b = m2;
        } else {
            a = m1;
        }
        if b - a < 1e-13 * (1.0 + best_u.abs()) {
            break;
        }
    }
    let refined = 0.5 * (a + b);
    Ok(if objective(refined) <= best_f {
        refined
    } else {
        best_u
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Derivative of the penalty for u > 0.
    fn derivative(spec: PenaltySpec, lambda: f64, u: f64) -> f64 {
        match spec {
            PenaltySpec::Lasso => lambda,
            PenaltySpec::Scad { a } => {
                if u <= lambda {
                    lambda
                } else {
                    (a * lambda - u).max(0.0) / (a - 1.0)
                }
            }
            PenaltySpec::Mcp { gamma } => (lambda - u / gamma).max(0.0),
        }
    }

    /// Composite Simpson's rule of the derivative on [0, u].
    fn integrate_derivative(spec: PenaltySpec, lambda: f64, u: f64) -> f64 {
        let m = 200_000;
        let h = u / m as f64;
        let mut s = derivative(spec, lambda, 0.0) + derivative(spec, lambda, u);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * derivative(spec, lambda, i as f64 * h);
        }
        s * h / 3.0
    }

    fn oracle(spec: PenaltySpec, lambda: f64, x: f64) -> f64 {
        let step = 1e-4 * x.abs().max(1.0);
        threshold_oracle(spec, lambda, x, x.abs() + 1.0, step).unwrap()
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_value(PenaltySpec::Lasso, 2.0, -3.0).unwrap(), 6.0);
        let scad = PenaltySpec::scad(3.7).unwrap();
        assert!((penalty_value(scad, 1.0, 10.0).unwrap() - 2.35).abs() < 1e-12);
        assert!((integrate_derivative(scad, 1.0, 10.0) - 2.35).abs() < 1e-6);
        let mcp = PenaltySpec::mcp(2.0).unwrap();
        assert!((penalty_value(mcp, 1.0, 5.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((integrate_derivative(mcp, 1.0, 5.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scad_middle_branch_matches_integral() {
        let scad = PenaltySpec::scad(3.7).unwrap();
        for u in [1.3, 2.0, 3.1, 3.69] {
            let closed = penalty_value(scad, 1.0, u).unwrap();
            assert!((closed - integrate_derivative(scad, 1.0, u)).abs() < 1e-6, "u={u}");
        }
    }

    #[test]
    fn threshold_examples() {
        let scad = PenaltySpec::scad(3.7).unwrap();
        assert_eq!(threshold(PenaltySpec::Lasso, 2.0, 5.0).unwrap(), 3.0);
        assert_eq!(threshold(scad, 1.0, 5.0).unwrap(), 5.0);
        let mid = threshold(scad, 1.0, 3.0).unwrap();
        assert!((mid - 4.4 / 1.7).abs() < 1e-12);
        let mcp = PenaltySpec::mcp(3.0).unwrap();
        assert!((threshold(mcp, 1.0, 2.0).unwrap() - 1.5).abs() < 1e-12);

        assert!((oracle(scad, 1.0, 5.0) - 5.0).abs() < 1e-6);
        assert!((oracle(scad, 1.0, 3.0) - 4.4 / 1.7).abs() < 1e-6);
        assert!((oracle(mcp, 1.0, 2.0) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn oracle_examples() {
        assert!((oracle(PenaltySpec::Lasso, 2.0, 5.0) - 3.0).abs() < 1e-6);
        let mcp = PenaltySpec::mcp(1.5).unwrap();
        assert!((oracle(mcp, 1.0, 1.2) - 0.6).abs() < 1e-6);
    }

    #[test]
    fn invalid_parameters() {
        assert!(PenaltySpec::scad(2.0).is_err());
        assert!(PenaltySpec::mcp(1.0).is_err());
        assert!(penalty_value(PenaltySpec::Lasso, -1.0, 1.0).is_err());
        assert!(threshold(PenaltySpec::Scad { a: 1.5 }, 1.0, 1.0).is_err());
        assert!(threshold(PenaltySpec::Lasso, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn monotone_on_grid() {
        for spec in [
            PenaltySpec::Lasso,
            PenaltySpec::Scad { a: 3.7 },
            PenaltySpec::Mcp { gamma: 1.5 },
        ] {
            let mut prev = f64::NEG_INFINITY;
            for i in -1000..=1000 {
                let h = threshold(spec, 1.3, i as f64 / 100.0).unwrap();
                assert!(h >= prev, "{spec} at {}", i as f64 / 100.0);
                prev = h;
            }
        }
    }

    #[test]
    fn continuous_across_branch_boundaries() {
        let delta = 1e-8;
        let (a, gamma, lambda): (f64, f64, f64) = (3.7, 1.5, 1.0);
        let c = ((a - 1.0) / (a - 2.0)).max(gamma / (gamma - 1.0)) + 1.0;
        let scad = PenaltySpec::Scad { a };
        let mcp = PenaltySpec::Mcp { gamma };
        for (spec, x) in [
            (scad, lambda),
            (scad, 2.0 * lambda),
            (scad, a * lambda),
            (mcp, lambda),
            (mcp, gamma * lambda),
        ] {
            let jump = (threshold(spec, lambda, x + delta).unwrap()
                - threshold(spec, lambda, x).unwrap())
            .abs();
            assert!(jump <= c * delta, "{spec} at {x}: jump {jump}");
        }
    }

    fn any_spec() -> impl Strategy<Value = PenaltySpec> {
        prop_oneof![
            Just(PenaltySpec::Lasso),
            (2.05f64..8.0).prop_map(|a| PenaltySpec::Scad { a }),
            (1.05f64..6.0).prop_map(|gamma| PenaltySpec::Mcp { gamma }),
        ]
    }

    proptest! {
        #[test]
        fn odd_and_shrinking(spec in any_spec(), lambda in 0.0f64..5.0, x in -10.0f64..10.0) {
            let h = threshold(spec, lambda, x).unwrap();
            prop_assert_eq!(threshold(spec, lambda, -x).unwrap(), -h);
            prop_assert!(h.abs() <= x.abs());
            let cutoff = match spec {
                PenaltySpec::Scad { a } => Some(a * lambda),
                PenaltySpec::Mcp { gamma } => Some(gamma * lambda),
                PenaltySpec::Lasso => None,
            };
            if let Some(c) = cutoff {
                if x.abs() > c {
                    prop_assert_eq!(h, x);
                }
            }
        }

        #[test]
        fn penalty_is_even_and_nondecreasing(spec in any_spec(), lambda in 0.0f64..5.0, u in 0.0f64..10.0, du in 0.0f64..1.0) {
            let v = penalty_value(spec, lambda, u).unwrap();
            prop_assert_eq!(v, penalty_value(spec, lambda, -u).unwrap());
            prop_assert!(penalty_value(spec, lambda, u + du).unwrap() >= v - 1e-12);
            prop_assert_eq!(penalty_value(spec, lambda, 0.0).unwrap(), 0.0);
        }
    }
}
