//! C ABI over the `tierbound` library.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free`. Every fallible call returns a [`TbStatus`];
//! on failure [`tb_last_error_message`] describes the error for the calling
//! thread. Panics are caught and reported as [`TbStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tierbound::bounds::{plugin_bounds, BoundsEstimate, Method, Smoother};
use tierbound::data::ObservationTable;
use tierbound::inference::{one_step_split, s1s, uncertainty_region, S1sConfig};
use tierbound::linalg::{matrix_inv_sqrt, Sym2};
use tierbound::nuisance::{NuisanceConfig, NuisancePair};
use tierbound::partition::TierPartition;
use tierbound::simulation::{oracle_truth, simulate};
use tierbound::Error;

/// Status codes. Values 2 to 4 agree with the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullArgument = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbMethod {
    PlugIn = 0,
    OneStep = 1,
    OneStepGelu = 2,
    S1s = 3,
}

/// Settings for [`tb_estimate`]; start from [`tb_estimate_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TbEstimateOptions {
    pub method: TbMethod,
    /// Training fraction for the one-step methods.
    pub split: f64,
    /// GELU smoothing for `OneStepGelu`.
    pub h: f64,
    /// Initial batch size for `S1s`.
    pub l: usize,
    pub seed: u64,
}

/// One stratum's bounds. `cov` holds `[xx, xy, yy]` when `has_cov`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TbBounds {
    pub stratum: i64,
    pub method: TbMethod,
    pub lower: f64,
    pub upper: f64,
    pub cov: [f64; 3],
    pub has_cov: bool,
    pub n_units: usize,
    pub out_of_space: bool,
    pub ridge_applied: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TbOracle {
    pub pb: f64,
    pub lower: f64,
    pub upper: f64,
    pub pb_quadrature: f64,
    pub lower_quadrature: f64,
    pub upper_quadrature: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TbRegion {
    pub lo: f64,
    pub hi: f64,
    pub s_hat: f64,
}

/// Opaque observation table.
pub struct TbTable(ObservationTable);

/// Opaque list of per-stratum estimates.
pub struct TbEstimates(Vec<BoundsEstimate>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TbStatus {
    match e.exit_code() {
        2 => TbStatus::Config,
        4 => TbStatus::Numerical,
        _ => TbStatus::Data,
    }
}

fn guard(f: impl FnOnce() -> Result<(), TbStatus>) -> TbStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            TbStatus::Panic
        }
    }
}

fn fail(e: Error) -> TbStatus {
    set_last_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> TbStatus {
    set_last_error(&format!("null pointer passed as `{what}`"));
    TbStatus::NullArgument
}

unsafe fn partition_from(thresholds: *const f64, len: usize) -> Result<TierPartition, TbStatus> {
    if thresholds.is_null() || len == 0 {
        return Err(null("thresholds"));
    }
    let c = std::slice::from_raw_parts(thresholds, len).to_vec();
    TierPartition::new(c).map_err(fail)
}

fn to_c(e: &BoundsEstimate) -> TbBounds {
    let c = e.covariance.unwrap_or(Sym2::ZERO);
    let method = match e.method {
        Method::OneStep => TbMethod::OneStep,
        Method::OneStepGelu => TbMethod::OneStepGelu,
        Method::S1s => TbMethod::S1s,
        _ => TbMethod::PlugIn,
    };
    TbBounds {
        stratum: e.stratum,
        method,
        lower: e.lower,
        upper: e.upper,
        cov: [c.xx, c.xy, c.yy],
        has_cov: e.covariance.is_some(),
        n_units: e.n_units,
        out_of_space: e.flags.out_of_space,
        ridge_applied: e.flags.ridge_applied,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Draws `n` units from the benchmark design.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tb_simulate(n: usize, seed: u64, out: *mut *mut TbTable) -> TbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = simulate(n, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(TbTable(s.table)));
        Ok(())
    })
}

/// Reads a CSV with columns `x`, `a`, `y` and covariates `w*`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_table_read_csv(path: *const c_char, out: *mut *mut TbTable) -> TbStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| fail(Error::Config("path is not UTF-8".into())))?;
        let t = ObservationTable::read_csv_path(p).map_err(fail)?;
        *out = Box::into_raw(Box::new(TbTable(t)));
        Ok(())
    })
}

/// Number of units, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_table_len(table: *const TbTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_table_free(table: *mut TbTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

#[no_mangle]
pub extern "C" fn tb_estimate_options_default() -> TbEstimateOptions {
    TbEstimateOptions {
        method: TbMethod::PlugIn,
        split: 0.5,
        h: 0.05,
        l: 0,
        seed: 1,
    }
}

/// Bounds for every stratum of `table` with default nuisance models.
///
/// # Safety
/// `table` must be a live handle, `thresholds` must point to
/// `n_thresholds` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_estimate(
    table: *const TbTable,
    thresholds: *const f64,
    n_thresholds: usize,
    options: TbEstimateOptions,
    out: *mut *mut TbEstimates,
) -> TbStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let partition = partition_from(thresholds, n_thresholds)?;
        let cfg = NuisanceConfig::default();
        let est = match options.method {
            TbMethod::PlugIn => NuisancePair::fit(t, &cfg).and_then(|nu| {
                t.strata().into_iter().map(|x| plugin_bounds(&nu, t, x, &partition)).collect()
            }),
            TbMethod::OneStep => one_step_split(t, &cfg, &partition, options.split, options.seed, Smoother::Hard),
            TbMethod::OneStepGelu => {
                one_step_split(t, &cfg, &partition, options.split, options.seed, Smoother::Gelu { h: options.h })
            }
            TbMethod::S1s => s1s(t, &partition, &S1sConfig::new(options.l, options.seed)).map(|r| r.estimates),
        }
        .map_err(fail)?;
        *out = Box::into_raw(Box::new(TbEstimates(est)));
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_estimates_len(est: *const TbEstimates) -> usize {
    est.as_ref().map_or(0, |e| e.0.len())
}

/// Copies entry `index` into `out`.
///
/// # Safety
/// `est` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_estimates_get(est: *const TbEstimates, index: usize, out: *mut TbBounds) -> TbStatus {
    guard(|| {
        let e = &est.as_ref().ok_or_else(|| null("est"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let item = e
            .get(index)
            .ok_or_else(|| fail(Error::Config(format!("index {index} out of range for {} estimates", e.len()))))?;
        *out = to_c(item);
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_estimates_free(est: *mut TbEstimates) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Ground truth for stratum 0 or 1 of the benchmark design.
///
/// # Safety
/// `thresholds` must point to `n_thresholds` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_oracle(
    stratum: i64,
    thresholds: *const f64,
    n_thresholds: usize,
    mc_samples: usize,
    seed: u64,
    out: *mut TbOracle,
) -> TbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let partition = partition_from(thresholds, n_thresholds)?;
        let r = oracle_truth(stratum, &partition, mc_samples, seed).map_err(fail)?;
        *out = TbOracle {
            pb: r.pb_true,
            lower: r.lower_true,
            upper: r.upper_true,
            pb_quadrature: r.quadrature.pb,
            lower_quadrature: r.quadrature.lower,
            upper_quadrature: r.quadrature.upper,
        };
        Ok(())
    })
}

/// `(sigma + ridge I)^(-1/2)` for `sigma = [xx, xy, yy]`.
///
/// # Safety
/// `sigma` and `out` must each point to three values.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_inv_sqrt(sigma: *const f64, ridge: f64, out: *mut f64) -> TbStatus {
    guard(|| {
        if sigma.is_null() {
            return Err(null("sigma"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = std::slice::from_raw_parts(sigma, 3);
        let t = matrix_inv_sqrt(&Sym2::new(s[0], s[1], s[2]), ridge).map_err(fail)?;
        ptr::copy_nonoverlapping([t.xx, t.xy, t.yy].as_ptr(), out, 3);
        Ok(())
    })
}

/// Monte-Carlo uncertainty region for one set of bounds.
///
/// # Safety
/// `bounds` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_uncertainty_region(
    bounds: *const TbBounds,
    level: f64,
    draws: usize,
    seed: u64,
    out: *mut TbRegion,
) -> TbStatus {
    guard(|| {
        let b = bounds.as_ref().ok_or_else(|| null("bounds"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method = match b.method {
            TbMethod::PlugIn => Method::PlugIn,
            TbMethod::OneStep => Method::OneStep,
            TbMethod::OneStepGelu => Method::OneStepGelu,
            TbMethod::S1s => Method::S1s,
        };
        let cov = b.has_cov.then(|| Sym2::new(b.cov[0], b.cov[1], b.cov[2]));
        let est = BoundsEstimate::new(b.stratum, method, b.lower, b.upper, cov, b.n_units);
        let r = uncertainty_region(&est, level, draws, seed).map_err(fail)?;
        *out = TbRegion {
            lo: r.lo,
            hi: r.hi,
            s_hat: r.s_hat,
        };
        Ok(())
    })
}
