//! Replication engine for the null-calibration, independence, screening,
//! model-size and power studies.
//!
//! Every replication draws its design and noise from seeds derived from
//! `(seed, replication index)` only, so a study produces the same per-rep
//! table whatever the number of worker threads.

mod stats;
mod studies;

pub use stats::{
    exp1_cdf, grid_chi_square, kolmogorov_sf, ks_statistic, mean, pearson, qq_pairs, quantile, sd,
};
pub use studies::{
    run_independence, run_null_qq, run_power, run_screening, run_study, run_table1,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{DesignParams, Family};
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;

/// Default seed of every study.
pub const DEFAULT_SEED: u64 = 2014;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    NullQq,
    Independence,
    Screening,
    Table1,
    Power,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::NullQq => "null_qq",
            StudyKind::Independence => "independence",
            StudyKind::Screening => "screening",
            StudyKind::Table1 => "table1",
            StudyKind::Power => "power",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "null_qq" => Ok(StudyKind::NullQq),
            "independence" => Ok(StudyKind::Independence),
            "screening" => Ok(StudyKind::Screening),
            "table1" => Ok(StudyKind::Table1),
            "power" => Ok(StudyKind::Power),
            other => Err(Error::param(format!("unknown study `{other}`"))),
        }
    }
}

/// A statistic recorded by a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "snake_case")]
pub enum StatisticKind {
    /// Covariance statistic under a penalty.
    Cov(PenaltySpec),
    /// V₁², the largest single-variable drop in RSS.
    MaxRssDrop,
    /// max(T₁, T₂) of the lasso covariance statistics.
    MaxCov12,
}

impl StatisticKind {
    pub fn label(&self) -> &'static str {
        match self {
            StatisticKind::Cov(p) => match p {
                PenaltySpec::Lasso => "cov_lasso",
                PenaltySpec::Scad { .. } => "cov_scad",
                PenaltySpec::Mcp { .. } => "cov_mcp",
            },
            StatisticKind::MaxRssDrop => "max_rss_drop",
            StatisticKind::MaxCov12 => "max_cov12",
        }
    }
}

/// Full description of a study run. `beta` lists the leading coefficients;
/// the remaining ones are zero. In the power study `beta` is the pattern
/// that multiplies each θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub design: DesignParams,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub statistics: Vec<StatisticKind>,
    pub level: f64,
    pub theta_grid: Vec<f64>,
    pub k0: usize,
    pub d: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub fixed_design: bool,
}

impl StudyConfig {
    /// Settings of each study as used in the reference experiments.
    pub fn defaults(study: StudyKind) -> Self {
        let base = StudyConfig {
            study,
            family: Family::Orthogonal,
            n: 100,
            p: 50,
            design: DesignParams::default(),
            beta: Vec::new(),
            sigma: 1.0,
            n_reps: 500,
            seed: DEFAULT_SEED,
            statistics: vec![StatisticKind::Cov(PenaltySpec::Lasso)],
            level: 0.05,
            theta_grid: Vec::new(),
            k0: 0,
            d: 3,
            k_min: 0,
            k_max: 4,
            fixed_design: false,
        };
        match study {
            StudyKind::NullQq => base,
            StudyKind::Independence => StudyConfig { p: 10, ..base },
            StudyKind::Screening => StudyConfig {
                family: Family::IrrepViolating,
                n: 600,
                p: 2000,
                beta: vec![5.0; 6],
                k0: 6,
                ..base
            },
            StudyKind::Table1 => StudyConfig {
                family: Family::IidGaussian,
                n: 500,
                p: 10,
                beta: vec![6.0, 6.0],
                n_reps: 1000,
                d: 6,
                ..base
            },
            StudyKind::Power => StudyConfig {
                family: Family::IidGaussian,
                n: 100,
                p: 10,
                beta: vec![1.0, 1.0],
                n_reps: 1000,
                statistics: vec![
                    StatisticKind::Cov(PenaltySpec::Lasso),
                    StatisticKind::MaxCov12,
                    StatisticKind::MaxRssDrop,
                ],
                theta_grid: (0..=8).map(f64::from).collect(),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::param("n_reps must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.beta.len() > self.p {
            return Err(Error::param(format!(
                "beta has {} entries but p = {}",
                self.beta.len(),
                self.p
            )));
        }
        if self.d == 0 {
            return Err(Error::param("d must be positive"));
        }
        for stat in &self.statistics {
            if let StatisticKind::Cov(p) = stat {
                p.validate()?;
            }
        }
        if self.study == StudyKind::Power {
            if self.theta_grid.is_empty() {
                return Err(Error::param("theta_grid must be nonempty for the power study"));
            }
            if let Some(t) = self.theta_grid.iter().find(|t| !(**t >= 0.0)) {
                return Err(Error::param(format!("theta_grid contains {t}; values must be >= 0")));
            }
        }
        Ok(())
    }

    /// Parses a JSON config object, or a run manifest holding one under
    /// `config`, on top of the defaults of its study. `expected` fixes the
    /// study when the object omits it and must match it otherwise.
    pub fn from_json(text: &str, expected: Option<StudyKind>) -> Result<Self> {
        let mut file: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::param(format!("config is not valid JSON: {e}")))?;
        if let Some(inner) = file.get_mut("config").map(serde_json::Value::take) {
            file = inner;
        }
        if !file.is_object() {
            return Err(Error::param("config must be a JSON object"));
        }
        let file_kind = match file.get("study") {
            Some(v) => Some(
                serde_json::from_value::<StudyKind>(v.clone())
                    .map_err(|e| Error::param(format!("config field `study`: {e}")))?,
            ),
            None => None,
        };
        if let (Some(want), Some(got)) = (expected, file_kind) {
            if want != got {
                return Err(Error::param(format!("config describes the {got} study, not {want}")));
            }
        }
        let base = StudyConfig::defaults(expected.or(file_kind).unwrap_or(StudyKind::NullQq));
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge_json(&mut merged, file);
        serde_json::from_value(merged).map_err(|e| Error::param(format!("config: {e}")))
    }

    /// Coefficient vector of length `p`.
    pub fn full_beta(&self, scale: f64) -> Vec<f64> {
        let mut beta = vec![0.0; self.p];
        for (b, v) in beta.iter_mut().zip(&self.beta) {
            *b = scale * v;
        }
        beta
    }
}

fn merge_json(base: &mut serde_json::Value, over: serde_json::Value) {
    use serde_json::Value;
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().map(|v| format_number(*v)).collect::<Vec<_>>());
        write_csv(&self.columns, rows)
    }
}

/// Table of preformatted cells, used for long-format plot data.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TextTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(columns: &[&str]) -> Self {
        TextTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        write_csv(&self.columns, self.rows.iter().cloned())
    }
}

/// RFC-4180 CSV with LF line endings.
fn write_csv<I>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Metric {
            name: name.into(),
            value,
            stderr: None,
        }
    }

    pub fn with_se(name: impl Into<String>, value: f64, stderr: f64) -> Self {
        Metric {
            name: name.into(),
            value,
            stderr: Some(stderr),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub per_rep: Table,
    pub summary: Vec<Metric>,
    /// Plot-data tables (QQ pairs, power curves) keyed by file stem.
    pub artifacts: Vec<(String, TextTable)>,
    pub wall_clock_seconds: f64,
}

impl StudyResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn metric_se(&self, name: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|m| m.name == name)
            .and_then(|m| m.stderr)
    }

    pub fn artifact(&self, name: &str) -> Option<&TextTable> {
        self.artifacts.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// `metric,value,stderr` CSV; a blank stderr when none applies.
    pub fn summary_csv(&self) -> String {
        let header = ["metric", "value", "stderr"].map(String::from);
        let rows = self.summary.iter().map(|m| {
            vec![
                m.name.clone(),
                format_number(m.value),
                m.stderr.map(format_number).unwrap_or_default(),
            ]
        });
        write_csv(&header, rows)
    }
}

/// Recomputes the summary of a study from its per-rep table.
pub fn summarize(cfg: &StudyConfig, per_rep: &Table) -> Result<Vec<Metric>> {
    studies::summarize(cfg, per_rep).map(|(summary, _)| summary)
}
