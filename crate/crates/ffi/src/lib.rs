//! C ABI over `moment_measures`.
//!
//! Measures and potentials are opaque handles owned by the caller and released with the
//! matching `*_free`. Every fallible call returns an [`MmStatus`]; on failure the message is
//! available from [`mm_last_error_message`] on the same thread until the next failing call.
//! Arrays are row-major `f64`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use moment_measures::forward;
use moment_measures::measures;
use moment_measures::quadrature::McOptions;
use moment_measures::solver::{self, SolverConfig};
use moment_measures::{DiscreteMeasure, Error, PolyhedralPotential};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NotIntegrable = 3,
    UnsupportedDimension = 4,
    Precondition = 5,
    NotConverged = 6,
    Numerical = 7,
    Panic = 8,
}

/// Opaque weighted atom set.
pub struct MmMeasure(DiscreteMeasure);

/// Opaque polyhedral potential `x ↦ max_i (y_i·x − v_i)`.
pub struct MmPotential(PolyhedralPotential);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<Vec<u8>>) {
    let mut bytes = message.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MmStatus {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Config(_) => MmStatus::InvalidInput,
        Error::NotIntegrable { .. } | Error::DivergentDirection(..) => MmStatus::NotIntegrable,
        Error::UnsupportedDimension(..) => MmStatus::UnsupportedDimension,
        Error::Precondition(_) => MmStatus::Precondition,
        Error::NotConverged(_) => MmStatus::NotConverged,
        _ => MmStatus::Numerical,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (MmStatus, String)>) -> MmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MmStatus::Panic
        }
    }
}

fn lib<T>(r: moment_measures::Result<T>) -> Result<T, (MmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MmStatus, String) {
    (MmStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (MmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn checked_len(dim: usize, count: usize) -> Result<usize, (MmStatus, String)> {
    dim.checked_mul(count)
        .ok_or((MmStatus::InvalidInput, "dim * count overflows".into()))
}

/// Message of the last failure on this thread; empty if none. Valid until the next failing
/// call on this thread.
#[no_mangle]
pub extern "C" fn mm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a measure from `count` atoms of dimension `dim` and their weights.
///
/// # Safety
/// `atoms` holds `dim * count` values, `weights` holds `count`, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mm_measure_new(
    dim: usize,
    count: usize,
    atoms: *const f64,
    weights: *const f64,
    out: *mut *mut MmMeasure,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = slice(atoms, checked_len(dim, count)?, "atoms")?;
        let w = slice(weights, count, "weights")?;
        let m = lib(DiscreteMeasure::from_flat(dim, a.to_vec(), w.to_vec()))?;
        *out = Box::into_raw(Box::new(MmMeasure(m)));
        Ok(())
    })
}

/// # Safety
/// `m` is null or came from [`mm_measure_new`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn mm_measure_free(m: *mut MmMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Checks the three necessary conditions. `out_failed` receives 0 when all hold, else the
/// index (1, 2 or 3) of the first failing condition: total mass, span, barycenter.
///
/// # Safety
/// `m` is a live handle and `out_failed` is writable.
#[no_mangle]
pub unsafe extern "C" fn mm_measure_validate(m: *const MmMeasure, tol: f64, out_failed: *mut i32) -> MmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        if out_failed.is_null() {
            return Err(null("out_failed"));
        }
        let r = lib(measures::validate(&m.0, tol))?;
        *out_failed = if !r.mass_ok {
            1
        } else if !r.span_ok {
            2
        } else if !r.barycenter_ok {
            3
        } else {
            0
        };
        Ok(())
    })
}

/// Creates a potential from atoms and values.
///
/// # Safety
/// `atoms` holds `dim * count` values, `values` holds `count`, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mm_potential_new(
    dim: usize,
    count: usize,
    atoms: *const f64,
    values: *const f64,
    out: *mut *mut MmPotential,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = slice(atoms, checked_len(dim, count)?, "atoms")?;
        let v = slice(values, count, "values")?;
        let p = lib(PolyhedralPotential::from_flat(dim, a.to_vec(), v.to_vec()))?;
        *out = Box::into_raw(Box::new(MmPotential(p)));
        Ok(())
    })
}

/// # Safety
/// `p` is null or came from this library and was not freed.
#[no_mangle]
pub unsafe extern "C" fn mm_potential_free(p: *mut MmPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Solves for the canonical potential whose moment measure is `m` (exact quadrature,
/// dimensions 1 and 2). Running out of iterations still yields a potential, with
/// `*out_converged = 0`.
///
/// # Safety
/// `m` is a live handle; `out` and `out_converged` are writable.
#[no_mangle]
pub unsafe extern "C" fn mm_solve(
    m: *const MmMeasure,
    gradient_tol: f64,
    max_iters: usize,
    out: *mut *mut MmPotential,
    out_converged: *mut i32,
) -> MmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("measure"))?;
        if out.is_null() || out_converged.is_null() {
            return Err(null("output pointer"));
        }
        let config = SolverConfig {
            gradient_tol,
            max_iters,
            ..SolverConfig::default()
        };
        let (p, report) = lib(solver::solve(&m.0, &config))?;
        *out_converged = i32::from(report.converged);
        *out = Box::into_raw(Box::new(MmPotential(p)));
        Ok(())
    })
}

/// Dimension and atom count of `p`.
///
/// # Safety
/// `p` is a live handle; outputs are null or writable.
#[no_mangle]
pub unsafe extern "C" fn mm_potential_shape(
    p: *const MmPotential,
    out_dim: *mut usize,
    out_count: *mut usize,
) -> MmStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("potential"))?;
        if let Some(d) = out_dim.as_mut() {
            *d = p.0.dim();
        }
        if let Some(c) = out_count.as_mut() {
            *c = p.0.len();
        }
        Ok(())
    })
}

/// `ψ(x)` and the index of the maximizing atom (lowest index on ties).
///
/// # Safety
/// `x` holds `dim` values; outputs are null or writable.
#[no_mangle]
pub unsafe extern "C" fn mm_potential_eval(
    p: *const MmPotential,
    x: *const f64,
    out_value: *mut f64,
    out_index: *mut usize,
) -> MmStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("potential"))?;
        let x = slice(x, p.0.dim(), "x")?;
        let (v, i) = p.0.eval(x);
        if let Some(o) = out_value.as_mut() {
            *o = v;
        }
        if let Some(o) = out_index.as_mut() {
            *o = i;
        }
        Ok(())
    })
}

/// Copies the value array into `out`, which has room for `len` entries.
///
/// # Safety
/// `out` is writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mm_potential_values(p: *const MmPotential, out: *mut f64, len: usize) -> MmStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("potential"))?;
        copy_out(p.0.values(), out, len)
    })
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (MmStatus, String)> {
    if len != src.len() {
        return Err((
            MmStatus::InvalidInput,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    Ok(())
}

/// Normalized moment-measure weight of each atom. Exact in dimensions 1 and 2; otherwise
/// importance sampling with `samples` draws from `seed`.
///
/// # Safety
/// `out` is writable for `len` values, `len` being the atom count.
#[no_mangle]
pub unsafe extern "C" fn mm_moment_measure(
    p: *const MmPotential,
    samples: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> MmStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("potential"))?;
        let est = lib(forward::moment_measure_polyhedral(&p.0, &McOptions::new(samples, seed)))?;
        let mut by_atom = vec![0.0; p.0.len()];
        if let Some(idx) = &est.atom_indices {
            for (k, &a) in idx.iter().enumerate() {
                by_atom[a] += est.weights[k];
            }
        }
        copy_out(&by_atom, out, len)
    })
}
