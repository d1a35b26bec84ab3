//! C ABI for the `compacton` solver.
//!
//! Grids, exponents and fields are opaque heap handles created by `cpt_*_new`
//! functions and released by the matching `cpt_*_free`. Every fallible function
//! returns a [`CptStatus`]; on failure a description is kept per thread and can be
//! read with [`cpt_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use compacton::config::{build_seeds, SeedKind};
use compacton::fibering::{minimize_constrained, SolveOptions};
use compacton::functionals::{energy, fiber_phi1, fiber_phi2, pohozaev, IntegralBundle};
use compacton::io::{read_field, write_field};
use compacton::mesh::{integrals, Exponents, Field, Geometry, Grid};
use compacton::pohozaev_check::boundary_flux;
use compacton::radial_ode::{find_compacton, ShootClass, ShootOptions};
use compacton::rayleigh::QuotientOptions;
use compacton::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    NonConvergence = 4,
    Format = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque exponent triple `(q, p, N)`.
pub struct CptExponents(Exponents);

/// Opaque cylinder grid.
pub struct CptGrid(Arc<Grid>);

/// Opaque grid function with the Dirichlet row at `r = R`.
pub struct CptField(Field);

/// The five integrals of a field.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CptIntegrals {
    pub i_x: f64,
    pub i_z: f64,
    pub i2: f64,
    pub s_q: f64,
    pub s_p: f64,
}

impl From<IntegralBundle> for CptIntegrals {
    fn from(b: IntegralBundle) -> Self {
        Self { i_x: b.i_x, i_z: b.i_z, i2: b.i2, s_q: b.s_q, s_p: b.s_p }
    }
}

impl From<&CptIntegrals> for IntegralBundle {
    fn from(b: &CptIntegrals) -> Self {
        IntegralBundle::new(b.i_x, b.i_z, b.s_q, b.s_p)
    }
}

/// Radial compacton found by shooting.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CptCompacton {
    pub a: f64,
    pub r_m: f64,
    pub max_psi: f64,
    pub residual_psi: f64,
    pub residual_dpsi: f64,
    /// 1 when the terminal residual met the tolerance.
    pub is_compacton: i32,
}

/// Scalar outcome of a constrained solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CptSolveSummary {
    pub lambda: f64,
    pub phi: f64,
    pub pohozaev: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub residual: f64,
    pub iz_fraction: f64,
    pub integrals: CptIntegrals,
    pub compact_support: i32,
    pub periodically_trivial: i32,
    pub feasible: i32,
    pub converged: i32,
    pub constraint_active: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CptStatus {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::DegenerateBundle(_) | Error::DivisionByZero(_) => {
            CptStatus::InvalidArgument
        }
        Error::Infeasible(_) => CptStatus::Infeasible,
        Error::NonConvergence { .. } | Error::Bracket(_) | Error::Integrator(_) => CptStatus::NonConvergence,
        Error::Format(_) | Error::Json(_) => CptStatus::Format,
        Error::Io(_) => CptStatus::Io,
    }
}

/// Runs `f`, records any error or panic, and converts it into a status.
fn guard(f: impl FnOnce() -> Result<(), (CptStatus, String)>) -> CptStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CptStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("panic: {msg}"));
            CptStatus::Panic
        }
    }
}

fn lib<T>(r: compacton::Result<T>) -> Result<T, (CptStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CptStatus, String) {
    (CptStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to a live value of type `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CptStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (CptStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CptStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(Path::new(s))
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), (CptStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the most recent failure on this thread, or null. The pointer stays
/// valid until the next `cpt_*` call on the same thread.
#[no_mangle]
pub extern "C" fn cpt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cpt_status_str(status: CptStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        CptStatus::Ok => b"ok\0",
        CptStatus::NullPointer => b"null pointer\0",
        CptStatus::InvalidArgument => b"invalid argument\0",
        CptStatus::Infeasible => b"infeasible\0",
        CptStatus::NonConvergence => b"no convergence\0",
        CptStatus::Format => b"malformed input\0",
        CptStatus::Io => b"i/o error\0",
        CptStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Creates exponents `(q, p, N)`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cpt_exponents_new(q: f64, p: f64, n: u32, out: *mut *mut CptExponents) -> CptStatus {
    guard(|| {
        let e = lib(Exponents::new(q, p, n as usize))?;
        put(out, Box::into_raw(Box::new(CptExponents(e))), "out")
    })
}

/// # Safety
/// `e` must be null or a handle from [`cpt_exponents_new`] or
/// [`cpt_field_read_json`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cpt_exponents_free(e: *mut CptExponents) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Creates the grid of `(−T, T) × B_R ⊂ ℝ × ℝ^N` with `nz` periodic cells and `nr`
/// radial cells.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cpt_grid_new(
    half_period: f64,
    r_omega: f64,
    n: u32,
    nz: u32,
    nr: u32,
    out: *mut *mut CptGrid,
) -> CptStatus {
    guard(|| {
        let geo = lib(Geometry::new(half_period, r_omega, n as usize))?;
        let g = lib(Grid::new(geo, nz as usize, nr as usize))?;
        put(out, Box::into_raw(Box::new(CptGrid(g))), "out")
    })
}

/// # Safety
/// `g` must be null or a live handle from [`cpt_grid_new`].
#[no_mangle]
pub unsafe extern "C" fn cpt_grid_free(g: *mut CptGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of stored values `nz·(nr + 1)` of a field on this grid.
///
/// # Safety
/// `g` must be a live grid handle and `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpt_grid_len(g: *const CptGrid, len: *mut usize) -> CptStatus {
    guard(|| {
        let g = deref(g, "grid")?;
        put(len, g.0.len(), "len")
    })
}

/// Builds a field from `len` row-major values (`i·(nr + 1) + j`). The values at
/// `r = R` must be zero.
///
/// # Safety
/// `g` must be a live grid handle, `values` must point to `len` readable doubles,
/// and `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cpt_field_from_values(
    g: *const CptGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut CptField,
) -> CptStatus {
    guard(|| {
        let g = deref(g, "grid")?;
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let f = lib(Field::from_values(&g.0, v))?;
        put(out, Box::into_raw(Box::new(CptField(f))), "out")
    })
}

/// # Safety
/// `f` must be null or a live field handle.
#[no_mangle]
pub unsafe extern "C" fn cpt_field_free(f: *mut CptField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Copies the field values into `buf`, which must hold at least the field length.
///
/// # Safety
/// `f` must be a live field handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn cpt_field_copy_values(f: *const CptField, buf: *mut f64, cap: usize) -> CptStatus {
    guard(|| {
        let f = deref(f, "field")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = f.0.values();
        if cap < v.len() {
            return Err((CptStatus::InvalidArgument, format!("buffer holds {cap} values, need {}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Reads a field file, returning the field and its exponents as new handles.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_field` and `out_exps` must be
/// valid for pointer writes.
#[no_mangle]
pub unsafe extern "C" fn cpt_field_read_json(
    path: *const c_char,
    out_field: *mut *mut CptField,
    out_exps: *mut *mut CptExponents,
) -> CptStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out_field.is_null() || out_exps.is_null() {
            return Err(null("output pointer"));
        }
        let (f, e) = lib(read_field(path))?;
        out_field.write(Box::into_raw(Box::new(CptField(f))));
        out_exps.write(Box::into_raw(Box::new(CptExponents(e))));
        Ok(())
    })
}

/// Writes a field file.
///
/// # Safety
/// Handles must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cpt_field_write_json(
    f: *const CptField,
    e: *const CptExponents,
    path: *const c_char,
) -> CptStatus {
    guard(|| {
        let f = deref(f, "field")?;
        let e = deref(e, "exponents")?;
        let path = path_arg(path)?;
        lib(write_field(path, &f.0, &e.0, &[]))
    })
}

/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpt_integrals(f: *const CptField, e: *const CptExponents, out: *mut CptIntegrals) -> CptStatus {
    guard(|| {
        let f = deref(f, "field")?;
        let e = deref(e, "exponents")?;
        put(out, integrals(&f.0, e.0.q(), e.0.p()).into(), "out")
    })
}

/// Energy `Φ` of a bundle at `lambda`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cpt_energy(
    b: *const CptIntegrals,
    lambda: f64,
    e: *const CptExponents,
    out: *mut f64,
) -> CptStatus {
    guard(|| {
        let b = deref(b, "integrals")?;
        let e = deref(e, "exponents")?;
        put(out, energy(&b.into(), lambda, &e.0), "out")
    })
}

/// Pohozaev functional `P` of a bundle at `lambda`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cpt_pohozaev(
    b: *const CptIntegrals,
    lambda: f64,
    e: *const CptExponents,
    out: *mut f64,
) -> CptStatus {
    guard(|| {
        let b = deref(b, "integrals")?;
        let e = deref(e, "exponents")?;
        put(out, pohozaev(&b.into(), lambda, &e.0), "out")
    })
}

/// First and second derivatives of `t ↦ Φ(tu)` at `t = 1`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cpt_fiber_derivatives(
    b: *const CptIntegrals,
    lambda: f64,
    e: *const CptExponents,
    phi1: *mut f64,
    phi2: *mut f64,
) -> CptStatus {
    guard(|| {
        let b: IntegralBundle = deref(b, "integrals")?.into();
        let e = deref(e, "exponents")?;
        put(phi1, fiber_phi1(&b, lambda), "phi1")?;
        put(phi2, fiber_phi2(&b, lambda, &e.0), "phi2")
    })
}

/// Boundary side of the Pohozaev identity.
///
/// # Safety
/// `f` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpt_boundary_flux(f: *const CptField, out: *mut f64) -> CptStatus {
    guard(|| {
        let f = deref(f, "field")?;
        put(out, boundary_flux(&f.0), "out")
    })
}

/// Shoots for the radial compacton of dimension `dim` with default tolerances.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cpt_find_compacton(dim: u32, q: f64, p: f64, out: *mut CptCompacton) -> CptStatus {
    guard(|| {
        let s = lib(find_compacton(dim as usize, q, p, &ShootOptions::default()))?;
        put(
            out,
            CptCompacton {
                a: s.a,
                r_m: s.r_m,
                max_psi: s.max_psi(),
                residual_psi: s.residual_psi,
                residual_dpsi: s.residual_dpsi,
                is_compacton: (s.classification == ShootClass::Compacton) as i32,
            },
            "out",
        )
    })
}

/// Constrained least-energy solve at `lambda` with default options and seeds.
/// `out_field` may be null when the solution field is not needed.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes; `out_field` must be null
/// or valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cpt_solve(
    g: *const CptGrid,
    e: *const CptExponents,
    lambda: f64,
    out: *mut CptSolveSummary,
    out_field: *mut *mut CptField,
) -> CptStatus {
    guard(|| {
        let g = deref(g, "grid")?;
        let e = deref(e, "exponents")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if g.0.geometry().dim() != e.0.dim() {
            return Err((CptStatus::InvalidArgument, "grid and exponents disagree on N".into()));
        }
        let kinds = [SeedKind::Bump, SeedKind::Modulated, SeedKind::Lambda0, SeedKind::Lambda1p];
        let seeds = lib(build_seeds(&kinds, &e.0, &g.0, &QuotientOptions::default()))?;
        let r = lib(minimize_constrained(lambda, &e.0, &g.0, &seeds, &SolveOptions::default()))?;
        out.write(CptSolveSummary {
            lambda: r.lambda,
            phi: r.phi,
            pohozaev: r.pohozaev,
            phi1: r.phi1,
            phi2: r.phi2,
            residual: r.residual,
            iz_fraction: r.iz_fraction,
            integrals: r.bundle.into(),
            compact_support: r.compact_support as i32,
            periodically_trivial: r.periodically_trivial as i32,
            feasible: r.feasible as i32,
            converged: r.converged as i32,
            constraint_active: r.constraint_active as i32,
        });
        if !out_field.is_null() {
            out_field.write(Box::into_raw(Box::new(CptField(r.u))));
        }
        Ok(())
    })
}
