//! C ABI for `pathsig-core`.
//!
//! Designs and paths cross the boundary as opaque handles created by a
//! `*_new` function and released by the matching `*_free`. Every fallible
//! function returns a [`PathsigStatus`]; the message of the last failure on
//! the calling thread is available from [`pathsig_last_error`]. Output
//! buffers are caller-allocated, with their length passed alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use pathsig::covtest::{cov_series_general, cov_series_orthogonal, CovSeries};
use pathsig::design::{make_design, simulate_response, DesignMatrix, DesignParams, Family, ResponseSpec};
use pathsig::harness::{run_study, StudyConfig};
use pathsig::model_size::{select_k0, SelectorConfig};
use pathsig::path::{trace_path, LassoPath, PathLimit};
use pathsig::penalty::{threshold, PenaltySpec};
use pathsig::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathsigStatus {
    Ok = 0,
    /// Invalid argument or configuration.
    Parameter = 1,
    /// Rank-deficient active set or another numerical failure.
    Numerical = 2,
    /// Input violates a documented precondition (e.g. a non-orthonormal
    /// design where one is required).
    Contract = 3,
    Io = 4,
    NullPointer = 5,
    /// An output buffer is shorter than required.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathsigFamily {
    Orthogonal = 0,
    EqualCorr = 1,
    Ar1 = 2,
    BlockDiag = 3,
    IrrepViolating = 4,
    IidGaussian = 5,
}

impl From<PathsigFamily> for Family {
    fn from(f: PathsigFamily) -> Self {
        match f {
            PathsigFamily::Orthogonal => Family::Orthogonal,
            PathsigFamily::EqualCorr => Family::EqualCorr,
            PathsigFamily::Ar1 => Family::Ar1,
            PathsigFamily::BlockDiag => Family::BlockDiag,
            PathsigFamily::IrrepViolating => Family::IrrepViolating,
            PathsigFamily::IidGaussian => Family::IidGaussian,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathsigPenaltyKind {
    Lasso = 0,
    Scad = 1,
    Mcp = 2,
}

/// A penalty; `param` is SCAD's `a` or MCP's `γ` and is ignored for the
/// lasso.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PathsigPenalty {
    pub kind: PathsigPenaltyKind,
    pub param: f64,
}

impl From<PathsigPenalty> for PenaltySpec {
    fn from(p: PathsigPenalty) -> Self {
        match p.kind {
            PathsigPenaltyKind::Lasso => PenaltySpec::Lasso,
            PathsigPenaltyKind::Scad => PenaltySpec::Scad { a: p.param },
            PathsigPenaltyKind::Mcp => PenaltySpec::Mcp { gamma: p.param },
        }
    }
}

/// Opaque design matrix with unit-norm columns.
pub struct PathsigDesign(DesignMatrix);

/// Opaque lasso path, holding the design and response it was traced on.
pub struct PathsigPath {
    path: LassoPath,
    x: DMatrix<f64>,
    y: DVector<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(PathsigStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parameter(_) => PathsigStatus::Parameter,
            Error::Contract(_) | Error::DeletionEvent(_) => PathsigStatus::Contract,
            Error::Singular { .. } => PathsigStatus::Numerical,
            Error::Io(_) => PathsigStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult) -> PathsigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PathsigStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PathsigStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PathsigStatus::NullPointer, format!("`{what}` is null"))
}

/// # Safety
/// `p` is null or points to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` is null or points to `len` writable values.
unsafe fn write_out(p: *mut f64, len: usize, values: &[f64], what: &str) -> FfiResult {
    if values.is_empty() {
        return Ok(());
    }
    if p.is_null() {
        return Err(null(what));
    }
    if len < values.len() {
        return Err(Failure(
            PathsigStatus::BufferTooSmall,
            format!("`{what}` holds {len} values, {} needed", values.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), p, values.len());
    Ok(())
}

/// Message of the last failure on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pathsig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Draws an `n × p` design of `family`.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to
/// release with `pathsig_design_free`.
#[no_mangle]
pub unsafe extern "C" fn pathsig_design_new(
    family: PathsigFamily,
    n: usize,
    p: usize,
    rho: f64,
    block_size: usize,
    s: usize,
    seed: u64,
    out: *mut *mut PathsigDesign,
) -> PathsigStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = DesignParams { rho, block_size, s };
        let x = make_design(family.into(), n, p, params, seed)?;
        *out = Box::into_raw(Box::new(PathsigDesign(x)));
        Ok(())
    })
}

/// Wraps a column-major `n × p` matrix; columns are scaled to unit norm.
///
/// # Safety
/// `values` points to `n·p` doubles and `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pathsig_design_from_values(
    values: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut PathsigDesign,
) -> PathsigStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(p).ok_or_else(|| Failure(PathsigStatus::Parameter, "n·p overflows".into()))?;
        let v = slice(values, len, "values")?;
        let m = DMatrix::from_column_slice(n, p, v);
        let x = DesignMatrix::from_values(m, Family::IidGaussian)?;
        *out = Box::into_raw(Box::new(PathsigDesign(x)));
        Ok(())
    })
}

/// # Safety
/// `design` is a live handle; `n` and `p` are valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pathsig_design_shape(
    design: *const PathsigDesign,
    n: *mut usize,
    p: *mut usize,
) -> PathsigStatus {
    guard(|| {
        let d = design.as_ref().ok_or_else(|| null("design"))?;
        if n.is_null() || p.is_null() {
            return Err(null("n/p"));
        }
        *n = d.0.n();
        *p = d.0.p();
        Ok(())
    })
}

/// Copies the standardized matrix, column-major, into `buf`.
///
/// # Safety
/// `design` is a live handle; `buf` holds `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pathsig_design_values(
    design: *const PathsigDesign,
    buf: *mut f64,
    len: usize,
) -> PathsigStatus {
    guard(|| {
        let d = design.as_ref().ok_or_else(|| null("design"))?;
        write_out(buf, len, d.0.values.as_slice(), "buf")
    })
}

/// # Safety
/// `design` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathsig_design_free(design: *mut PathsigDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// `y = Xβ + σε`. `beta` lists the leading coefficients (the rest are
/// zero); `y` receives `n` values.
///
/// # Safety
/// `design` is a live handle; `beta` holds `beta_len` doubles; `y` holds
/// `y_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pathsig_simulate_response(
    design: *const PathsigDesign,
    beta: *const f64,
    beta_len: usize,
    sigma: f64,
    seed: u64,
    y: *mut f64,
    y_len: usize,
) -> PathsigStatus {
    guard(|| {
        let d = design.as_ref().ok_or_else(|| null("design"))?;
        let lead = slice(beta, beta_len, "beta")?;
        if lead.len() > d.0.p() {
            return Err(Failure(PathsigStatus::Parameter, "beta is longer than p".into()));
        }
        let mut full = vec![0.0; d.0.p()];
        full[..lead.len()].copy_from_slice(lead);
        let spec = ResponseSpec { beta: full, sigma, seed };
        let resp = simulate_response(&d.0, &spec)?;
        write_out(y, y_len, resp.as_slice(), "y")
    })
}

/// Traces the lasso path of `(design, y)` until `max_entries` entering
/// events (0 for the whole path).
///
/// # Safety
/// `design` is a live handle; `y` holds `y_len` doubles; `out` is a valid
/// pointer receiving a handle for `pathsig_path_free`.
#[no_mangle]
pub unsafe extern "C" fn pathsig_path_new(
    design: *const PathsigDesign,
    y: *const f64,
    y_len: usize,
    max_entries: usize,
    out: *mut *mut PathsigPath,
) -> PathsigStatus {
    guard(|| {
        let d = design.as_ref().ok_or_else(|| null("design"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = DVector::from_column_slice(slice(y, y_len, "y")?);
        let limit = if max_entries == 0 {
            PathLimit::steps(usize::MAX)
        } else {
            PathLimit::entries(max_entries)
        };
        let path = trace_path(&d.0.values, &y, limit)?;
        *out = Box::into_raw(Box::new(PathsigPath {
            path,
            x: d.0.values.clone(),
            y,
        }));
        Ok(())
    })
}

/// Number of knots (entries and deletions); 0 for a null handle.
///
/// # Safety
/// `path` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathsig_path_steps(path: *const PathsigPath) -> usize {
    path.as_ref().map_or(0, |p| p.path.steps())
}

/// Copies the knot values λ_1 > λ_2 > … into `buf`.
///
/// # Safety
/// `path` is a live handle; `buf` holds `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pathsig_path_lambdas(
    path: *const PathsigPath,
    buf: *mut f64,
    len: usize,
) -> PathsigStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        write_out(buf, len, &p.path.lambdas(), "buf")
    })
}

/// # Safety
/// `path` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathsig_path_free(path: *mut PathsigPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Lasso covariance statistics `T_1..T_m` along `path`.
///
/// # Safety
/// `path` is a live handle; `out` holds `m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pathsig_cov_series(
    path: *const PathsigPath,
    m: usize,
    sigma2: f64,
    out: *mut f64,
) -> PathsigStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let s = cov_series_general(&p.x, &p.y, &p.path, m, sigma2)?;
        write_out(out, m, &s.values, "out")
    })
}

/// `T_1..T_m` of an orthonormal design from its sorted knots `v`.
///
/// # Safety
/// `v` holds `v_len` doubles; `out` holds `m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pathsig_cov_series_orthogonal(
    v: *const f64,
    v_len: usize,
    m: usize,
    sigma2: f64,
    penalty: PathsigPenalty,
    out: *mut f64,
) -> PathsigStatus {
    guard(|| {
        let v = slice(v, v_len, "v")?;
        let s = cov_series_orthogonal(v, m, sigma2, penalty.into())?;
        write_out(out, m, &s.values, "out")
    })
}

/// Thresholding rule `h_λ(x)` of `penalty`.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pathsig_threshold(
    penalty: PathsigPenalty,
    lambda: f64,
    x: f64,
    out: *mut f64,
) -> PathsigStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = threshold(penalty.into(), lambda, x)?;
        Ok(())
    })
}

/// Selects the model size from the lasso statistics `T_1..T_len`.
/// `q`, when not null, receives `Q_k` for `k = k_min..=k_max`.
///
/// # Safety
/// `series` holds `len` doubles; `k0` is valid; `q` is null or holds
/// `q_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pathsig_select_k0(
    series: *const f64,
    len: usize,
    d: usize,
    k_min: usize,
    k_max: usize,
    k0: *mut usize,
    q: *mut f64,
    q_len: usize,
) -> PathsigStatus {
    guard(|| {
        if k0.is_null() {
            return Err(null("k0"));
        }
        let values = slice(series, len, "series")?.to_vec();
        let s = CovSeries::new(values, 1.0, PenaltySpec::Lasso);
        let sel = select_k0(&s, &SelectorConfig { d, k_min, k_max })?;
        if !q.is_null() {
            write_out(q, q_len, &sel.q, "q")?;
        }
        *k0 = sel.k0;
        Ok(())
    })
}

/// Runs a study from a JSON config (missing fields take the study's
/// defaults) and returns its `metric,value,stderr` summary CSV.
///
/// # Safety
/// `config_json` is a NUL-terminated string; `summary_csv` is a valid
/// pointer receiving a string to release with `pathsig_string_free`.
#[no_mangle]
pub unsafe extern "C" fn pathsig_run_study(
    config_json: *const c_char,
    summary_csv: *mut *mut c_char,
) -> PathsigStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if summary_csv.is_null() {
            return Err(null("summary_csv"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| Failure(PathsigStatus::Parameter, "config is not UTF-8".into()))?;
        let cfg = StudyConfig::from_json(text, None)?;
        let result = run_study(&cfg)?;
        let csv = CString::new(result.summary_csv())
            .map_err(|_| Failure(PathsigStatus::Parameter, "summary contains NUL".into()))?;
        *summary_csv = csv.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` is null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathsig_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
