//! Lasso solution paths.
//!
//! [`lars_lasso_path`] traces the exact piecewise-linear lasso path with the
//! LARS algorithm and the lasso modification (variables leave the active set
//! when their coefficient crosses zero). The path is parametrized by the
//! penalty level λ of `½‖y − Xβ‖² + λ‖β‖₁`; on a segment with active set `A`
//! and signs `s`, `β_A(λ') = β_A(λ) + (λ − λ')·(X_AᵀX_A)⁻¹s`.

mod cholesky;

pub use cholesky::GramCholesky;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};

/// Pivot tolerance of the active Gram factorization.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "column", rename_all = "snake_case")]
pub enum Event {
    Enter(usize),
    Leave(usize),
}

impl Event {
    pub fn column(self) -> usize {
        match self {
            Event::Enter(j) | Event::Leave(j) => j,
        }
    }

    pub fn is_entry(self) -> bool {
        matches!(self, Event::Enter(_))
    }
}

#[derive(Debug, Clone)]
pub struct PathKnot {
    pub lambda: f64,
    pub event: Event,
    /// Active set just before this knot's event, in order of entry.
    pub active_before: Vec<usize>,
    /// Active set after the event, aligned with `signs`.
    pub active: Vec<usize>,
    pub signs: Vec<f64>,
    /// Lasso solution at `lambda`.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub knots: Vec<PathKnot>,
    pub n: usize,
    pub p: usize,
    pub max_steps: usize,
    /// Solution at λ = 0 when the path ran to its end; `None` when it was
    /// truncated by a step or entry limit.
    pub terminal: Option<Vec<f64>>,
}

impl LassoPath {
    /// Number of knots (each entry or deletion is one step).
    pub fn steps(&self) -> usize {
        self.knots.len()
    }

    /// Number of entering events.
    pub fn entering_events(&self) -> usize {
        self.knots.iter().filter(|k| k.event.is_entry()).count()
    }

    pub fn is_exhausted(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k.lambda).collect()
    }

    /// Columns in order of entry, ignoring deletions.
    pub fn entered_columns(&self) -> Vec<usize> {
        self.knots
            .iter()
            .filter_map(|k| match k.event {
                Event::Enter(j) => Some(j),
                Event::Leave(_) => None,
            })
            .collect()
    }

    /// Knot index of the `k`-th entering event (1-based `k`).
    pub fn entry_knot(&self, k: usize) -> Option<usize> {
        if k == 0 {
            return None;
        }
        self.knots
            .iter()
            .enumerate()
            .filter(|(_, kn)| kn.event.is_entry())
            .nth(k - 1)
            .map(|(i, _)| i)
    }

    /// λ and solution at the knot after `idx`; `(0, terminal)` past the last
    /// knot of an exhausted path. `None` if the path was truncated there.
    pub fn successor(&self, idx: usize) -> Option<(f64, &[f64])> {
        match self.knots.get(idx + 1) {
            Some(k) => Some((k.lambda, &k.coef)),
            None => self.terminal.as_deref().map(|t| (0.0, t)),
        }
    }

    /// Lasso solution at any λ covered by the path, by linear interpolation
    /// between knots.
    pub fn coef_at(&self, lambda: f64) -> Option<Vec<f64>> {
        let first = self.knots.first()?;
        if lambda >= first.lambda {
            return Some(vec![0.0; self.p]);
        }
        for (i, knot) in self.knots.iter().enumerate() {
            let (next_lambda, next_coef) = self.successor(i)?;
            if lambda >= next_lambda {
                let span = knot.lambda - next_lambda;
                let t = if span > 0.0 { (knot.lambda - lambda) / span } else { 1.0 };
                return Some(
                    knot.coef
                        .iter()
                        .zip(next_coef)
                        .map(|(a, b)| a + t * (b - a))
                        .collect(),
                );
            }
        }
        None
    }
}

/// Stopping rule of the path tracer.
#[derive(Debug, Clone, Copy)]
pub struct PathLimit {
    /// Maximum number of knots.
    pub max_steps: usize,
    /// Stop after this many entering events.
    pub max_entries: Option<usize>,
    /// Stop at this λ (the returned terminal solution is evaluated there).
    pub min_lambda: Option<f64>,
}

impl PathLimit {
    pub fn steps(max_steps: usize) -> Self {
        PathLimit {
            max_steps,
            max_entries: None,
            min_lambda: None,
        }
    }

    pub fn entries(max_entries: usize) -> Self {
        PathLimit {
            max_steps: usize::MAX,
            max_entries: Some(max_entries),
            min_lambda: None,
        }
    }
}

fn check_unit_columns(x: &DMatrix<f64>) -> Result<()> {
    for (j, col) in x.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::param(format!(
                "column {j} has norm {norm}; the path requires unit-norm columns"
            )));
        }
    }
    Ok(())
}

/// Exact lasso path for `max_steps` knots (entries and deletions both
/// count). `max_steps` must not exceed `min(n − 1, p)`.
pub fn lars_lasso_path(x: &DesignMatrix, y: &DVector<f64>, max_steps: usize) -> Result<LassoPath> {
    let cap = (x.n() - 1).min(x.p());
    if max_steps == 0 || max_steps > cap {
        return Err(Error::param(format!(
            "max_steps must lie in 1..={cap}, got {max_steps}"
        )));
    }
    trace_path(&x.values, y, PathLimit::steps(max_steps))
}

/// Path tracer with an arbitrary stopping rule. Columns of `x` must have
/// unit norm.
pub fn trace_path(x: &DMatrix<f64>, y: &DVector<f64>, limit: PathLimit) -> Result<LassoPath> {
    if y.len() != x.nrows() {
        return Err(Error::param(format!(
            "response has length {} but the design has {} rows",
            y.len(),
            x.nrows()
        )));
    }
    check_unit_columns(x)?;
    Tracer::new(x, y).run(limit)
}

struct Tracer<'a> {
    x: &'a DMatrix<f64>,
    n: usize,
    p: usize,
    /// Xᵀ(y − Xβ).
    corr: DVector<f64>,
    beta: Vec<f64>,
    active: Vec<usize>,
    signs: Vec<f64>,
    is_active: Vec<bool>,
    chol: GramCholesky,
}

impl<'a> Tracer<'a> {
    fn new(x: &'a DMatrix<f64>, y: &DVector<f64>) -> Self {
        let (n, p) = x.shape();
        Tracer {
            x,
            n,
            p,
            corr: x.tr_mul(y),
            beta: vec![0.0; p],
            active: Vec::new(),
            signs: Vec::new(),
            is_active: vec![false; p],
            chol: GramCholesky::new(),
        }
    }

    fn knot(&self, lambda: f64, event: Event, active_before: Vec<usize>) -> PathKnot {
        PathKnot {
            lambda,
            event,
            active_before,
            active: self.active.clone(),
            signs: self.signs.clone(),
            coef: self.beta.clone(),
        }
    }

    fn add(&mut self, j: usize, sign: f64, step: usize) -> Result<()> {
        let col = self.x.column(j);
        let cross: Vec<f64> = self.active.iter().map(|&k| self.x.column(k).dot(&col)).collect();
        if !self.chol.push(&cross, col.norm_squared(), RANK_TOL) {
            return Err(Error::Singular { step, column: j });
        }
        self.active.push(j);
        self.signs.push(sign);
        self.is_active[j] = true;
        Ok(())
    }

    fn drop_position(&mut self, pos: usize) {
        let j = self.active.remove(pos);
        self.signs.remove(pos);
        self.chol.remove(pos);
        self.is_active[j] = false;
        self.beta[j] = 0.0;
    }

    fn run(mut self, limit: PathLimit) -> Result<LassoPath> {
        let mut path = LassoPath {
            knots: Vec::new(),
            n: self.n,
            p: self.p,
            max_steps: limit.max_steps,
            terminal: None,
        };
        let max_active = (self.n - 1).min(self.p);

        // First knot: λ₁ = ‖Xᵀy‖∞, lowest index wins exact ties.
        let mut lambda = 0.0;
        let mut first = 0;
        for (j, c) in self.corr.iter().enumerate() {
            if c.abs() > lambda {
                lambda = c.abs();
                first = j;
            }
        }
        if lambda <= 0.0 {
            path.terminal = Some(vec![0.0; self.p]);
            return Ok(path);
        }
        if let Some(stop) = limit.min_lambda {
            if stop >= lambda {
                path.terminal = Some(vec![0.0; self.p]);
                return Ok(path);
            }
        }
        path.knots.push(self.knot(lambda, Event::Enter(first), Vec::new()));
        self.add(first, self.corr[first].signum(), 1)?;
        let mut entries = 1;
        let eps = 1e-12 * lambda;
        let mut just_dropped: Option<usize> = None;

        loop {
            if path.knots.len() >= limit.max_steps
                || limit.max_entries.is_some_and(|m| entries >= m)
            {
                break;
            }

            let w = self.chol.solve(&self.signs);
            let mut u = DVector::zeros(self.n);
            for (&j, &wj) in self.active.iter().zip(&w) {
                u.axpy(wj, &self.x.column(j), 1.0);
            }
            let a = self.x.tr_mul(&u);

            // Smallest step δ = λ − λ' to the next event.
            let mut delta = lambda;
            let mut event: Option<Event> = None;
            for j in 0..self.p {
                if self.is_active[j] {
                    continue;
                }
                let (c, aj) = (self.corr[j], a[j]);
                for (num, den) in [(lambda - c, 1.0 - aj), (lambda + c, 1.0 + aj)] {
                    // A column already on the boundary and moving outward
                    // enters at the current knot (exact ties).
                    let on_boundary = num.abs() <= eps;
                    let d = if on_boundary { 0.0 } else { num / den };
                    let admissible = if on_boundary {
                        den > 0.0 && just_dropped != Some(j)
                    } else {
                        d > eps
                    };
                    if admissible && d < delta {
                        delta = d;
                        event = Some(Event::Enter(j));
                    }
                }
            }
            let mut leave_pos = None;
            for (pos, (&j, &wj)) in self.active.iter().zip(&w).enumerate() {
                if wj == 0.0 {
                    continue;
                }
                let d = -self.beta[j] / wj;
                if d > eps && d < delta {
                    delta = d;
                    event = Some(Event::Leave(j));
                    leave_pos = Some(pos);
                }
            }
            if let Some(stop) = limit.min_lambda {
                if lambda - delta <= stop {
                    self.advance(&w, &a, lambda - stop.max(0.0));
                    path.terminal = Some(self.beta.clone());
                    return Ok(path);
                }
            }

            self.advance(&w, &a, delta);
            lambda -= delta;

            match event {
                None => {
                    path.terminal = Some(self.beta.clone());
                    break;
                }
                Some(Event::Enter(j)) => {
                    if self.active.len() >= max_active {
                        break;
                    }
                    let before = self.active.clone();
                    let step = path.knots.len() + 1;
                    let sign = self.corr[j].signum();
                    self.add(j, sign, step)?;
                    let knot = self.knot(lambda, Event::Enter(j), before);
                    path.knots.push(knot);
                    entries += 1;
                    just_dropped = None;
                }
                Some(Event::Leave(j)) => {
                    let before = self.active.clone();
                    self.drop_position(leave_pos.expect("deletion position"));
                    just_dropped = Some(j);
                    path.knots.push(self.knot(lambda, Event::Leave(j), before));
                }
            }
        }
        Ok(path)
    }

    fn advance(&mut self, w: &[f64], a: &DVector<f64>, delta: f64) {
        for (&j, &wj) in self.active.iter().zip(w) {
            self.beta[j] += delta * wj;
        }
        self.corr.axpy(-delta, a, 1.0);
    }
}

/// |Xᵀy| sorted in decreasing order (the knots of an orthonormal design).
pub fn orthogonal_knots(x: &DesignMatrix, y: &DVector<f64>) -> Result<Vec<f64>> {
    let err = x.orthonormality_error();
    if err > 1e-8 {
        return Err(Error::contract(format!(
            "design is not orthonormal (max |XᵀX − I| = {err:.3e})"
        )));
    }
    if y.len() != x.n() {
        return Err(Error::param("response length does not match the design"));
    }
    Ok(sorted_abs_desc(x.values.tr_mul(y).iter().copied()))
}

pub(crate) fn sorted_abs_desc(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.map(f64::abs).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Lasso fit using only the columns in `subset`, at penalty `lambda`.
/// Coordinates outside `subset` are zero.
pub fn restricted_lasso_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    subset: &[usize],
    lambda: f64,
) -> Result<Vec<f64>> {
    let p = x.ncols();
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("lambda must be >= 0, got {lambda}")));
    }
    if let Some(&bad) = subset.iter().find(|&&j| j >= p) {
        return Err(Error::param(format!("column {bad} is out of range (p = {p})")));
    }
    let mut full = vec![0.0; p];
    if subset.is_empty() {
        return Ok(full);
    }
    let sub = x.select_columns(subset);
    let limit = PathLimit {
        max_steps: usize::MAX,
        max_entries: None,
        min_lambda: Some(lambda),
    };
    let sub_path = trace_path(&sub, y, limit)?;
    let coef = match sub_path.terminal {
        Some(c) => c,
        // Truncated only by the n − 1 active cap.
        None => {
            return Err(Error::Singular {
                step: sub_path.steps(),
                column: subset[subset.len() - 1],
            })
        }
    };
    for (k, &j) in subset.iter().enumerate() {
        full[j] = coef[k];
    }
    Ok(full)
}

/// Largest violation of the lasso optimality conditions at `lambda`:
/// `|X_jᵀr| = λ` on `active`, `|X_jᵀr| ≤ λ` elsewhere.
pub fn kkt_violation(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    coef: &[f64],
    lambda: f64,
    active: &[usize],
) -> f64 {
    let beta = DVector::from_column_slice(coef);
    let resid = y - x * beta;
    let grad = x.tr_mul(&resid);
    let mut is_active = vec![false; x.ncols()];
    for &j in active {
        is_active[j] = true;
    }
    grad.iter()
        .enumerate()
        .map(|(j, g)| {
            if is_active[j] {
                (g.abs() - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
