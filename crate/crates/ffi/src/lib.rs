//! C ABI over `wgnls-core`.
//!
//! Objects are opaque handles created by `wgnls_*_new`/`_load`/solver calls
//! and released with the matching `_free`. Every fallible call returns a
//! [`WgnlsStatus`]; on failure the message is available from
//! [`wgnls_last_error`] on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use num_complex::Complex64;
use wgnls_core::frequency::{solve_gamma_branches, SolverOptions};
use wgnls_core::mass::{solve_m_c, MassInit};
use wgnls_core::pipeline::{self, RunOptions};
use wgnls_core::{init, snapshot, Config, DomainSpec, Error, Field, Grid, ModelParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgnlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Discretization of `R^d x T^m`.
pub struct WgnlsGrid(Arc<Grid>);

/// Complex field on a grid.
pub struct WgnlsField(Field);

/// Scalar functionals of a field at one frequency.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WgnlsReport {
    pub omega: f64,
    pub mass: f64,
    pub kinetic_x: f64,
    pub kinetic_y: f64,
    pub potential: f64,
    pub energy: f64,
    pub action: f64,
    pub virial: f64,
    pub nehari: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WgnlsStatus {
    match e {
        Error::Io(_) | Error::Snapshot { .. } | Error::MissingOutput(_) | Error::Json(_) => WgnlsStatus::Io,
        Error::Degenerate(_) | Error::ZeroField | Error::Shooting(_) | Error::Infeasible(_) | Error::NoSignChange { .. } => {
            WgnlsStatus::Numerical
        }
        _ => WgnlsStatus::InvalidArgument,
    }
}

fn guard<F: FnOnce() -> Result<(), (WgnlsStatus, String)>>(f: F) -> WgnlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WgnlsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            WgnlsStatus::Panic
        }
    }
}

fn core<T>(r: wgnls_core::Result<T>) -> Result<T, (WgnlsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (WgnlsStatus, String) {
    (WgnlsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (WgnlsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (WgnlsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (WgnlsStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (WgnlsStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wgnls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wgnls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `n_y = 0` means no torus axis (`m` must then be 0).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wgnls_grid_new(
    d: usize,
    m: usize,
    alpha: f64,
    half_length: f64,
    n_x: usize,
    n_y: usize,
    out: *mut *mut WgnlsGrid,
) -> WgnlsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = core(ModelParams::new(d, m, alpha))?;
        let domain = core(DomainSpec::new(half_length, n_x, (n_y > 0).then_some(n_y)))?;
        let grid = core(Grid::new(params, domain))?;
        *out = Box::into_raw(Box::new(WgnlsGrid(grid)));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wgnls_grid_free(grid: *mut WgnlsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of grid points.
///
/// # Safety
/// `grid` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn wgnls_grid_len(grid: *const WgnlsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// `exp(-omega |x|^2/2) (1 + modulation cos y)`.
///
/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wgnls_field_gaussian(
    grid: *const WgnlsGrid,
    omega: f64,
    modulation: f64,
    out: *mut *mut WgnlsField,
) -> WgnlsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out = out_ptr(out, "out")?;
        if !(omega > 0.0 && modulation.is_finite()) {
            return Err((WgnlsStatus::InvalidArgument, format!("omega {omega}, modulation {modulation}")));
        }
        *out = Box::into_raw(Box::new(WgnlsField(init::gaussian(&g.0, omega, modulation))));
        Ok(())
    })
}

/// Builds a field from `len` real and imaginary parts in row-major order.
///
/// # Safety
/// `re` and `im` must point to `len` doubles; `grid`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wgnls_field_from_parts(
    grid: *const WgnlsGrid,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut WgnlsField,
) -> WgnlsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out = out_ptr(out, "out")?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let (re, im) = (std::slice::from_raw_parts(re, len), std::slice::from_raw_parts(im, len));
        let values = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let f = core(Field::new(g.0.clone(), values))?;
        *out = Box::into_raw(Box::new(WgnlsField(f)));
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wgnls_field_free(field: *mut WgnlsField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// # Safety
/// `field` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn wgnls_field_len(field: *const WgnlsField) -> usize {
    field.as_ref().map_or(0, |f| f.0.len())
}

/// Copies the values out; `len` must equal the field length.
///
/// # Safety
/// `re` and `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wgnls_field_copy_parts(
    field: *const WgnlsField,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> WgnlsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        if len != f.0.len() {
            return Err((
                WgnlsStatus::InvalidArgument,
                format!("buffer length {len}, field length {}", f.0.len()),
            ));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, len), std::slice::from_raw_parts_mut(im, len));
        for (i, v) in f.0.values().iter().enumerate() {
            re[i] = v.re;
            im[i] = v.im;
        }
        Ok(())
    })
}

/// # Safety
/// `field` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wgnls_evaluate(field: *const WgnlsField, omega: f64, out: *mut WgnlsReport) -> WgnlsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let out = out_ptr(out, "out")?;
        let r = wgnls_core::evaluate(&f.0, omega);
        *out = WgnlsReport {
            omega: r.omega,
            mass: r.mass,
            kinetic_x: r.kinetic_x,
            kinetic_y: r.kinetic_y,
            potential: r.potential,
            energy: r.energy,
            action: r.action,
            virial: r.virial,
            nehari: r.nehari,
        };
        Ok(())
    })
}

/// Minimizes the action on the Pohozaev manifold at frequency `omega`.
/// Writes the minimizer to `out_field` and the minimum to `out_value`; the
/// status is `Numerical` if the solve did not converge (the state is still
/// returned).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wgnls_solve_groundstate(
    grid: *const WgnlsGrid,
    omega: f64,
    out_field: *mut *mut WgnlsField,
    out_value: *mut f64,
) -> WgnlsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let (of, ov) = (out_ptr(out_field, "out_field")?, out_ptr(out_value, "out_value")?);
        let b = core(solve_gamma_branches(&g.0, omega, &SolverOptions::default()))?;
        let gs = b.best().clone();
        *ov = gs.value;
        let converged = gs.converged;
        *of = Box::into_raw(Box::new(WgnlsField(gs.field)));
        if converged {
            Ok(())
        } else {
            Err((WgnlsStatus::Numerical, format!("not converged at omega {omega}")))
        }
    })
}

/// Minimal energy at mass `c` on the virial manifold (mass-critical only).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wgnls_solve_m_c(
    grid: *const WgnlsGrid,
    c: f64,
    out_field: *mut *mut WgnlsField,
    out_value: *mut f64,
) -> WgnlsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let (of, ov) = (out_ptr(out_field, "out_field")?, out_ptr(out_value, "out_value")?);
        let ms = core(solve_m_c(&g.0, c, &MassInit::Surgery, &SolverOptions::default()))?;
        *ov = ms.state.value;
        let converged = ms.state.converged;
        *of = Box::into_raw(Box::new(WgnlsField(ms.state.field)));
        if converged {
            Ok(())
        } else {
            Err((WgnlsStatus::Numerical, format!("not converged at c {c}")))
        }
    })
}

/// # Safety
/// `field` must be valid; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn wgnls_snapshot_save(field: *const WgnlsField, path: *const c_char) -> WgnlsStatus {
    guard(|| {
        let f = deref(field, "field")?;
        core(snapshot::save(&f.0, path_arg(path)?))
    })
}

/// Loads a snapshot; the field owns a fresh grid.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wgnls_snapshot_load(path: *const c_char, out: *mut *mut WgnlsField) -> WgnlsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let f = core(snapshot::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(WgnlsField(f)));
        Ok(())
    })
}

/// Runs a configuration file into `output_root`. `exit_code` receives the
/// run's exit code (0 complete, 2 partial, 1 failed).
///
/// # Safety
/// `config` and `output_root` must be NUL-terminated UTF-8; `exit_code` valid.
#[no_mangle]
pub unsafe extern "C" fn wgnls_run_config(
    config: *const c_char,
    output_root: *const c_char,
    exit_code: *mut i32,
) -> WgnlsStatus {
    guard(|| {
        let code = out_ptr(exit_code, "exit_code")?;
        let cfg = core(Config::load(path_arg(config)?))?;
        let opts = RunOptions {
            output_root: path_arg(output_root)?.to_path_buf(),
            stop_after: None,
        };
        let r = core(pipeline::run(&cfg, &opts))?;
        *code = r.manifest.status.exit_code();
        Ok(())
    })
}
