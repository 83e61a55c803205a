//! Significance tests along penalized regression solution paths.
//!
//! The crate computes the covariance test statistic of each variable as it
//! enters the lasso path, its SCAD and MCP analogues on orthonormal designs,
//! the window statistic `Q_k` used to choose the model size, and a Monte
//! Carlo harness that checks these statistics against their limit laws.
//!
//! ```
//! use pathsig::design::{make_design, simulate_response, DesignParams, Family, ResponseSpec};
//! use pathsig::path::{trace_path, PathLimit};
//! use pathsig::covtest::cov_series_general;
//!
//! let x = make_design(Family::IidGaussian, 100, 10, DesignParams::default(), 1).unwrap();
//! let y = simulate_response(&x, &ResponseSpec { beta: vec![0.0; 10], sigma: 1.0, seed: 1 }).unwrap();
//! let path = trace_path(&x.values, &y, PathLimit::entries(4)).unwrap();
//! let series = cov_series_general(&x.values, &y, &path, 3, 1.0).unwrap();
//! assert_eq!(series.values.len(), 3);
//! ```

pub mod cli;
pub mod covtest;
pub mod design;
pub mod error;
pub mod harness;
pub mod model_size;
pub mod path;
pub mod penalty;
pub mod rng;

pub use error::{Error, Result};
