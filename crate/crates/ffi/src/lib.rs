//! C interface to `quantcredit`.
//!
//! Trees are opaque handles created by `qc_tree_build_gbm` or `qc_tree_load`
//! and released with `qc_tree_free`. Every fallible function returns a
//! [`QcStatus`]; on failure `qc_last_error` describes the problem for the
//! calling thread.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use quantcredit::analytic::{black_payer, gbm_survival_f, implied_vol, BlackQuote};
use quantcredit::filter::{conditional_survival, ObservationPath};
use quantcredit::model::{GbmSpec, TimeGrid};
use quantcredit::quantizer::{build_tree, uniform_sizes, QuantizationTree};
use quantcredit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Geometric Brownian signal and observation parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcGbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
    pub x0: f64,
    pub y0: f64,
    pub barrier: f64,
}

impl QcGbmParams {
    fn spec(&self) -> Result<GbmSpec, Failure> {
        Ok(GbmSpec::new(self.mu, self.sigma, self.delta, self.x0, self.y0, self.barrier)?)
    }
}

/// Opaque quantization tree.
pub struct QcTree {
    tree: QuantizationTree,
}

struct Failure(QcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Extinct { .. }
            | Error::OutOfBand { .. }
            | Error::NumericalOverflow { .. }
            | Error::Quantization { .. }
            | Error::WeightCollapse { .. } => QcStatus::Numerical,
            _ => QcStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QcStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(QcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { p.write(v) };
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(QcStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Message describing the last failure on this thread; empty after a
/// success. Valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn qc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a tree with `size` points per date on `obs_steps` equal steps up to
/// `t_obs`, continued with the same step to `t_end`.
///
/// # Safety
/// `params` must point to a valid `QcGbmParams` and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn qc_tree_build_gbm(
    params: *const QcGbmParams,
    t_obs: f64,
    obs_steps: usize,
    t_end: f64,
    size: usize,
    out: *mut *mut QcTree,
) -> QcStatus {
    guard(|| {
        let spec = unsafe { as_ref(params, "params") }?.spec()?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = TimeGrid::observed_then_extended(t_obs, obs_steps, t_end)?;
        let steps = grid.steps();
        let tree = build_tree(spec.into_arc(), grid, &uniform_sizes(steps, size))?;
        unsafe { write_out(out, Box::into_raw(Box::new(QcTree { tree })), "out") }
    })
}

/// Load a tree saved by `qc_tree_save` (or the `quantize` command).
///
/// # Safety
/// `params` and `path` must be valid, `path` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qc_tree_load(params: *const QcGbmParams, path: *const c_char, out: *mut *mut QcTree) -> QcStatus {
    guard(|| {
        let spec = unsafe { as_ref(params, "params") }?.spec()?;
        let path = unsafe { path_arg(path) }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let file = File::open(&path).map_err(|e| Failure(QcStatus::Io, format!("{path}: {e}")))?;
        let tree = QuantizationTree::read_from(BufReader::new(file), spec.into_arc())?;
        unsafe { write_out(out, Box::into_raw(Box::new(QcTree { tree })), "out") }
    })
}

/// # Safety
/// `tree` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qc_tree_save(tree: *const QcTree, path: *const c_char) -> QcStatus {
    guard(|| {
        let tree = unsafe { as_ref(tree, "tree") }?;
        let path = unsafe { path_arg(path) }?;
        let file = File::create(&path).map_err(|e| Failure(QcStatus::Io, format!("{path}: {e}")))?;
        tree.tree
            .write_to(BufWriter::new(file))
            .map_err(|e| Failure(QcStatus::Io, format!("{path}: {e}")))
    })
}

/// Release a tree. Null is ignored.
///
/// # Safety
/// `tree` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qc_tree_free(tree: *mut QcTree) {
    if !tree.is_null() {
        drop(unsafe { Box::from_raw(tree) });
    }
}

/// Number of time steps and index of the observation date.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qc_tree_dims(tree: *const QcTree, steps: *mut usize, obs_index: *mut usize) -> QcStatus {
    guard(|| {
        let tree = unsafe { as_ref(tree, "tree") }?;
        unsafe {
            write_out(steps, tree.tree.steps(), "steps")?;
            write_out(obs_index, tree.tree.time_grid().obs_index(), "obs_index")
        }
    })
}

/// Copy the date of step `k` into `time`, and its grid points and weights
/// into the caller's arrays of capacity `cap`. `len` always receives the
/// grid size; `QC_STATUS_BUFFER_TOO_SMALL` is returned if `cap` is short.
///
/// # Safety
/// `points` and `weights` must hold `cap` doubles (may be null if `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn qc_tree_grid(
    tree: *const QcTree,
    k: usize,
    time: *mut f64,
    points: *mut f64,
    weights: *mut f64,
    cap: usize,
    len: *mut usize,
) -> QcStatus {
    guard(|| {
        let tree = unsafe { as_ref(tree, "tree") }?;
        if k > tree.tree.steps() {
            return Err(Failure(QcStatus::InvalidArgument, format!("step {k} beyond {}", tree.tree.steps())));
        }
        let g = tree.tree.grid(k);
        unsafe {
            write_out(len, g.len(), "len")?;
            write_out(time, tree.tree.time_grid().time(k), "time")?;
        }
        if cap < g.len() {
            return Err(Failure(
                QcStatus::BufferTooSmall,
                format!("grid {k} has {} points, buffer holds {cap}", g.len()),
            ));
        }
        if points.is_null() || weights.is_null() {
            return Err(null("points or weights"));
        }
        unsafe {
            ptr::copy_nonoverlapping(g.points().as_ptr(), points, g.len());
            ptr::copy_nonoverlapping(g.weights().as_ptr(), weights, g.len());
        }
        Ok(())
    })
}

/// Survival to date index `horizon` given observations `obs[0..=m]` on the
/// tree dates, with (`p_full`) and without (`p_y_only`) knowledge of
/// survival up to the observation date.
///
/// # Safety
/// `obs` must hold `obs_len` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_conditional_survival(
    tree: *const QcTree,
    obs: *const f64,
    obs_len: usize,
    horizon: usize,
    p_full: *mut f64,
    p_y_only: *mut f64,
) -> QcStatus {
    guard(|| {
        let tree = unsafe { as_ref(tree, "tree") }?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        let values = unsafe { std::slice::from_raw_parts(obs, obs_len) }.to_vec();
        let path = ObservationPath::on_grid(tree.tree.time_grid(), values)?;
        let r = conditional_survival(&tree.tree, &path, horizon, None)?;
        if r.extinct {
            return Err(Error::Extinct { step: tree.tree.time_grid().obs_index() }.into());
        }
        unsafe {
            write_out(p_full, r.p_full, "p_full")?;
            write_out(p_y_only, r.p_y_only, "p_y_only")
        }
    })
}

/// Closed-form probability that the geometric signal started at `x` stays
/// above `barrier` for a period `u`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_gbm_survival(mu: f64, sigma: f64, barrier: f64, x: f64, u: f64, out: *mut f64) -> QcStatus {
    guard(|| {
        if !(sigma > 0.0) || ![mu, barrier, x, u].iter().all(|v| v.is_finite()) {
            return Err(Failure(QcStatus::InvalidArgument, "need sigma > 0 and finite inputs".into()));
        }
        unsafe { write_out(out, gbm_survival_f(mu, sigma, barrier, x, u), "out") }
    })
}

/// Black payer price `annuity (forward N(d1) - strike N(d2))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_black_payer(
    forward: f64,
    strike: f64,
    expiry: f64,
    annuity: f64,
    vol: f64,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let q = BlackQuote {
            forward,
            strike,
            expiry,
            annuity,
            vol,
        };
        unsafe { write_out(out, black_payer(&q)?, "out") }
    })
}

/// Black volatility reproducing `price`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    expiry: f64,
    annuity: f64,
    out: *mut f64,
) -> QcStatus {
    guard(|| {
        let q = BlackQuote {
            forward,
            strike,
            expiry,
            annuity,
            vol: 0.0,
        };
        unsafe { write_out(out, implied_vol(price, &q)?, "out") }
    })
}
