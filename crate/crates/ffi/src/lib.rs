//! C interface to `bpr-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`BprStatus`]; the message of the most recent failure on the calling
//! thread is available from [`bpr_last_error_message`].
//!
//! Matrices are passed as flat row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bpr_core::bundling::{exact_bundle, greedy_bundle, objective, Bundling, BundlingConfig, Diameter};
use bpr_core::criterion::{covariance, CriterionKind};
use bpr_core::geo::haversine_matrix;
use bpr_core::metrics;
use bpr_core::panel::{ingest_panel, AssetPanel};
use bpr_core::pipeline::{self, RunConfig};
use bpr_core::reconcile::{build_reconciler, reconcile_vector, summing_matrix, LeadWeights, ReconcilerModel};
use nalgebra::{DMatrix, DVector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BprStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Io = 4,
    Panel = 5,
    Bundling = 6,
    Reconcile = 7,
    Metrics = 8,
    Pipeline = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Covariance criterion used by the bundling calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BprCriterion {
    Variance = 0,
    Savar = 1,
    Imcy = 2,
}

impl From<BprCriterion> for CriterionKind {
    fn from(c: BprCriterion) -> Self {
        match c {
            BprCriterion::Variance => CriterionKind::Variance,
            BprCriterion::Savar => CriterionKind::SaVar,
            BprCriterion::Imcy => CriterionKind::Imcy,
        }
    }
}

pub struct BprPanel {
    inner: AssetPanel,
}

pub struct BprBundling {
    inner: Bundling,
}

pub struct BprReconciler {
    inner: ReconcilerModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(BprStatus, String);

impl Failure {
    fn new(status: BprStatus, e: impl std::fmt::Display) -> Self {
        Self(status, e.to_string())
    }
}

fn guard<F>(f: F) -> BprStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BprStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BprStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(BprStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BprStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(BprStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(BprStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_ptr<T>(p: *mut T, what: &str) -> Result<&'static mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(BprStatus::NullPointer, format!("{what} is null")))
}

fn diameter(km: f64) -> Result<Diameter, Failure> {
    let d = Diameter::from(km);
    d.validate().map_err(|e| Failure::new(BprStatus::InvalidArgument, e))?;
    Ok(d)
}

/// Copies the last error message of this thread into `buf` as a NUL-terminated
/// string, truncating if needed. Returns the untruncated length including the
/// terminator, or 0 when there is no pending error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn bpr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bpr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads and validates a panel from the asset table and wide series CSV.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bpr_panel_load(
    assets_path: *const c_char,
    series_path: *const c_char,
    out: *mut *mut BprPanel,
) -> BprStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let a = cstr(assets_path, "assets_path")?;
        let s = cstr(series_path, "series_path")?;
        let panel = ingest_panel(Path::new(a), Path::new(s)).map_err(|e| Failure::new(BprStatus::Panel, e))?;
        *out = Box::into_raw(Box::new(BprPanel { inner: panel }));
        Ok(())
    })
}

/// # Safety
/// `panel` must come from [`bpr_panel_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bpr_panel_free(panel: *mut BprPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Number of assets, or 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bpr_panel_n_assets(panel: *const BprPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_assets())
}

/// Number of time steps, or 0 for a null handle.
///
/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bpr_panel_n_steps(panel: *const BprPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_steps())
}

#[derive(Clone, Copy)]
enum Solver {
    Greedy,
    Exact,
}

unsafe fn bundle(
    panel: *const BprPanel,
    criterion: BprCriterion,
    k: usize,
    diameter_km: f64,
    out: *mut *mut BprBundling,
    solver: Solver,
) -> BprStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = &deref(panel, "panel")?.inner;
        let cfg = BundlingConfig::new(k, criterion.into(), diameter(diameter_km)?);
        let d = haversine_matrix(p.assets()).map_err(|e| Failure::new(BprStatus::Panel, e))?;
        let b = match solver {
            Solver::Greedy => greedy_bundle(p, &d, &cfg).map(|o| o.bundling),
            Solver::Exact => exact_bundle(p, &d, &cfg).map(|(b, _)| b),
        }
        .map_err(|e| Failure::new(BprStatus::Bundling, e))?;
        *out = Box::into_raw(Box::new(BprBundling { inner: b }));
        Ok(())
    })
}

/// Greedy bundling into `k` bundles. Pass `INFINITY` for no diameter cap.
///
/// # Safety
/// `panel` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bpr_bundle_greedy(
    panel: *const BprPanel,
    criterion: BprCriterion,
    k: usize,
    diameter_km: f64,
    out: *mut *mut BprBundling,
) -> BprStatus {
    bundle(panel, criterion, k, diameter_km, out, Solver::Greedy)
}

/// Exhaustive optimum for small panels (at most 12 assets).
///
/// # Safety
/// As [`bpr_bundle_greedy`].
#[no_mangle]
pub unsafe extern "C" fn bpr_bundle_exact(
    panel: *const BprPanel,
    criterion: BprCriterion,
    k: usize,
    diameter_km: f64,
    out: *mut *mut BprBundling,
) -> BprStatus {
    bundle(panel, criterion, k, diameter_km, out, Solver::Exact)
}

/// Builds a bundling from per-asset labels; labels are canonicalised.
///
/// # Safety
/// `labels` must hold `n_assets` entries.
#[no_mangle]
pub unsafe extern "C" fn bpr_bundling_from_assignment(
    labels: *const usize,
    n_assets: usize,
    out: *mut *mut BprBundling,
) -> BprStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        if labels.is_null() {
            return Err(Failure(BprStatus::NullPointer, "labels is null".into()));
        }
        let labels = std::slice::from_raw_parts(labels, n_assets);
        let ids = (0..n_assets).map(|i| format!("a{i}")).collect();
        let b = Bundling::from_assignment(labels, ids).map_err(|e| Failure::new(BprStatus::Bundling, e))?;
        *out = Box::into_raw(Box::new(BprBundling { inner: b }));
        Ok(())
    })
}

/// # Safety
/// `bundling` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bpr_bundling_free(bundling: *mut BprBundling) {
    if !bundling.is_null() {
        drop(Box::from_raw(bundling));
    }
}

/// Number of bundles, or 0 for a null handle.
///
/// # Safety
/// `bundling` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bpr_bundling_k(bundling: *const BprBundling) -> usize {
    bundling.as_ref().map_or(0, |b| b.inner.k())
}

/// Writes the bundle index of every asset into `out` (length `len`).
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bpr_bundling_assignment(bundling: *const BprBundling, out: *mut usize, len: usize) -> BprStatus {
    guard(|| {
        let b = &deref(bundling, "bundling")?.inner;
        if out.is_null() {
            return Err(Failure(BprStatus::NullPointer, "out is null".into()));
        }
        if len < b.n_assets() {
            return Err(Failure(
                BprStatus::BufferTooSmall,
                format!("need {} entries, got {len}", b.n_assets()),
            ));
        }
        ptr::copy_nonoverlapping(b.assignment().as_ptr(), out, b.n_assets());
        Ok(())
    })
}

/// Criterion objective of `bundling` on `panel`.
///
/// # Safety
/// Handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bpr_bundling_objective(
    panel: *const BprPanel,
    bundling: *const BprBundling,
    criterion: BprCriterion,
    out: *mut f64,
) -> BprStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        let b = &deref(bundling, "bundling")?.inner;
        let out = out_ptr(out, "out")?;
        let sigma = covariance(p, criterion.into()).map_err(|e| Failure::new(BprStatus::Bundling, e))?;
        *out = objective(b, &sigma).map_err(|e| Failure::new(BprStatus::Bundling, e))?;
        Ok(())
    })
}

/// Per-lead WLS reconciler. `weights` is `horizon x (N+K+1)` row-major.
///
/// # Safety
/// `weights` must hold `horizon * n_rows` values.
#[no_mangle]
pub unsafe extern "C" fn bpr_reconciler_build(
    bundling: *const BprBundling,
    weights: *const f64,
    horizon: usize,
    n_rows: usize,
    out: *mut *mut BprReconciler,
) -> BprStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let b = &deref(bundling, "bundling")?.inner;
        let s = summing_matrix(b);
        if n_rows != s.n_rows() || horizon == 0 {
            return Err(Failure(
                BprStatus::InvalidArgument,
                format!("expected {} rows and a positive horizon", s.n_rows()),
            ));
        }
        let w = slice(weights, horizon * n_rows, "weights")?;
        let lw = LeadWeights::from_raw(w.chunks(n_rows).map(<[f64]>::to_vec).collect(), 0)
            .map_err(|e| Failure::new(BprStatus::InvalidArgument, e))?;
        let model = build_reconciler(&s, &lw).map_err(|e| Failure::new(BprStatus::Reconcile, e))?;
        *out = Box::into_raw(Box::new(BprReconciler { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `r` must come from [`bpr_reconciler_build`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bpr_reconciler_free(r: *mut BprReconciler) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Reconciles one stacked vector `(total, bundles, assets)` at lead `lead` (0-based).
///
/// # Safety
/// `input` and `output` must each hold `len` values; they may alias.
#[no_mangle]
pub unsafe extern "C" fn bpr_reconciler_apply(
    r: *const BprReconciler,
    lead: usize,
    input: *const f64,
    output: *mut f64,
    len: usize,
) -> BprStatus {
    guard(|| {
        let m = &deref(r, "reconciler")?.inner;
        if lead >= m.horizon() || len != m.summing().n_rows() {
            return Err(Failure(
                BprStatus::InvalidArgument,
                format!("lead must be < {}, len must be {}", m.horizon(), m.summing().n_rows()),
            ));
        }
        let h = DVector::from_column_slice(slice(input, len, "input")?);
        if output.is_null() {
            return Err(Failure(BprStatus::NullPointer, "output is null".into()));
        }
        let rec = reconcile_vector(m, lead, &h);
        ptr::copy(rec.as_ptr(), output, len);
        Ok(())
    })
}

/// Splits an `m x n x t` array (origin, series, lead) into per-origin blocks.
unsafe fn blocks(p: *const f64, m: usize, n: usize, t: usize, what: &str) -> Result<Vec<DMatrix<f64>>, Failure> {
    if m == 0 || n == 0 || t == 0 {
        return Err(Failure(BprStatus::InvalidArgument, "dimensions must be positive".into()));
    }
    let v = slice(p, m * n * t, what)?;
    Ok(v.chunks(n * t).map(|c| DMatrix::from_row_slice(n, t, c)).collect())
}

unsafe fn metric<F>(
    actuals: *const f64,
    forecasts: *const f64,
    m: usize,
    n: usize,
    t: usize,
    out: *mut f64,
    f: F,
) -> BprStatus
where
    F: FnOnce(&[DMatrix<f64>], &[DMatrix<f64>]) -> Result<f64, metrics::MetricsError>,
{
    guard(|| {
        let out = out_ptr(out, "out")?;
        let a = blocks(actuals, m, n, t, "actuals")?;
        let b = blocks(forecasts, m, n, t, "forecasts")?;
        *out = f(&a, &b).map_err(|e| Failure::new(BprStatus::Metrics, e))?;
        Ok(())
    })
}

/// NMAE in percent; arrays are `m x n x t` row-major, `capacities` has `n` entries.
///
/// # Safety
/// Arrays must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn bpr_metric_nmae(
    actuals: *const f64,
    forecasts: *const f64,
    m: usize,
    n: usize,
    t: usize,
    capacities: *const f64,
    out: *mut f64,
) -> BprStatus {
    let caps = match slice(capacities, n, "capacities") {
        Ok(c) => c.to_vec(),
        Err(Failure(s, msg)) => {
            set_error(msg);
            return s;
        }
    };
    metric(actuals, forecasts, m, n, t, out, |a, b| metrics::nmae(a, b, &caps))
}

/// # Safety
/// As [`bpr_metric_nmae`].
#[no_mangle]
pub unsafe extern "C" fn bpr_metric_rmse(
    actuals: *const f64,
    forecasts: *const f64,
    m: usize,
    n: usize,
    t: usize,
    out: *mut f64,
) -> BprStatus {
    metric(actuals, forecasts, m, n, t, out, metrics::rmse)
}

/// Variogram score of order `p`.
///
/// # Safety
/// As [`bpr_metric_nmae`].
#[no_mangle]
pub unsafe extern "C" fn bpr_metric_variogram(
    actuals: *const f64,
    forecasts: *const f64,
    m: usize,
    n: usize,
    t: usize,
    p: f64,
    out: *mut f64,
) -> BprStatus {
    metric(actuals, forecasts, m, n, t, out, |a, b| metrics::variogram_score(a, b, p))
}

/// # Safety
/// As [`bpr_metric_nmae`].
#[no_mangle]
pub unsafe extern "C" fn bpr_metric_energy_distance(
    actuals: *const f64,
    forecasts: *const f64,
    m: usize,
    n: usize,
    t: usize,
    out: *mut f64,
) -> BprStatus {
    metric(actuals, forecasts, m, n, t, out, metrics::energy_distance)
}

/// Runs every stage for the config file. `out_dir` may be null to use the
/// directory named in the config.
///
/// # Safety
/// Strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bpr_run(config_path: *const c_char, out_dir: *const c_char) -> BprStatus {
    guard(|| {
        let cfg_path = cstr(config_path, "config_path")?;
        let out = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(cstr(out_dir, "out_dir")?))
        };
        let (cfg, bytes) = RunConfig::load(Path::new(cfg_path)).map_err(|e| Failure::new(BprStatus::Pipeline, e))?;
        pipeline::run(&cfg, &bytes, out).map_err(|e| Failure::new(BprStatus::Pipeline, e))?;
        Ok(())
    })
}
