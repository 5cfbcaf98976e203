//! C ABI over the `conslab` measurement models.
//!
//! Every function returns a [`ConslabStatus`]; on failure a message is kept
//! per thread and can be read with [`conslab_last_error`]. Results are
//! written through caller-provided out-pointers. Systems are opaque handles
//! created by [`conslab_system_new`] and released by [`conslab_system_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conslab::apparatus::{self, ApparatusConfig, CompositeSystem};
use conslab::decoherence::{self, EnvironmentConfig};
use conslab::ideal::{self, ViolationKind};
use conslab::kernel::{c64, C64};
use conslab::spin::Spin;
use conslab::Error;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConslabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    NotNormalized = 3,
    Underdetermined = 4,
    DimensionOverflow = 5,
    EmptyBranch = 6,
    /// A conservation audit or other internal invariant failed.
    InvariantViolation = 7,
    Numerical = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConslabViolationKind {
    NoViolation = 0,
    TypeI = 1,
    TypeII = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConslabComplex {
    pub re: f64,
    pub im: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConslabVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConslabComplexVec3 {
    pub x: ConslabComplex,
    pub y: ConslabComplex,
    pub z: ConslabComplex,
}

/// Real, nonnegative amplitudes of |+z>|ready> -> C|u> + D|d'> and
/// |-z>|ready> -> E|d> + F|u'>.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConslabErrorAmplitudes {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

/// SI values: I k T, Delta L = sqrt(I k T), Delta theta = hbar / Delta L.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConslabThermal {
    pub ikt: f64,
    pub delta_l: f64,
    pub delta_theta: f64,
}

/// Spin-1/2 particle, spin-L apparatus and record qubit.
pub struct ConslabSystem {
    inner: CompositeSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ConslabStatus {
    match e {
        Error::InvalidParameter { .. } | Error::InvalidSpin(_) | Error::OrientationUndefined(_) => {
            ConslabStatus::InvalidParameter
        }
        Error::NotNormalized { .. } => ConslabStatus::NotNormalized,
        Error::Underdetermined(_) => ConslabStatus::Underdetermined,
        Error::DimensionOverflow { .. } => ConslabStatus::DimensionOverflow,
        Error::EmptyBranch { .. } => ConslabStatus::EmptyBranch,
        Error::InvariantViolation(_) | Error::InconsistentBookkeeping(_) => ConslabStatus::InvariantViolation,
        _ => ConslabStatus::Numerical,
    }
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard<F>(f: F) -> ConslabStatus
where
    F: FnOnce() -> Result<(), ConslabFailure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ConslabStatus::Ok,
        Ok(Err(ConslabFailure::Null(what))) => {
            set_last_error(format!("null pointer passed for `{what}`"));
            ConslabStatus::NullPointer
        }
        Ok(Err(ConslabFailure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_last_error(format!("panic: {msg}"));
            ConslabStatus::Panic
        }
    }
}

enum ConslabFailure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for ConslabFailure {
    fn from(e: Error) -> Self {
        ConslabFailure::Core(e)
    }
}

fn complex(z: C64) -> ConslabComplex {
    ConslabComplex { re: z.re, im: z.im }
}

fn complex_vec(v: [C64; 3]) -> ConslabComplexVec3 {
    ConslabComplexVec3 {
        x: complex(v[0]),
        y: complex(v[1]),
        z: complex(v[2]),
    }
}

fn vec3(v: [f64; 3]) -> ConslabVec3 {
    ConslabVec3 { x: v[0], y: v[1], z: v[2] }
}

fn kind(k: ViolationKind) -> ConslabViolationKind {
    match k {
        ViolationKind::NoViolation => ConslabViolationKind::NoViolation,
        ViolationKind::TypeI => ConslabViolationKind::TypeI,
        ViolationKind::TypeII => ConslabViolationKind::TypeII,
    }
}

unsafe fn system<'a>(sys: *const ConslabSystem) -> Result<&'a CompositeSystem, ConslabFailure> {
    // SAFETY: caller passes a live handle from `conslab_system_new` or null.
    unsafe { sys.as_ref() }
        .map(|s| &s.inner)
        .ok_or(ConslabFailure::Null("system"))
}

unsafe fn write<T>(out: *mut T, value: T, name: &'static str) -> Result<(), ConslabFailure> {
    if out.is_null() {
        return Err(ConslabFailure::Null(name));
    }
    // SAFETY: non-null and, by contract, valid for writes of T.
    unsafe { out.write(value) };
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conslab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a system with apparatus spin `twice_l / 2`, tilted by `tilt` radians.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn conslab_system_new(twice_l: u32, tilt: f64, out: *mut *mut ConslabSystem) -> ConslabStatus {
    guard(|| {
        if out.is_null() {
            return Err(ConslabFailure::Null("out"));
        }
        if twice_l == 0 {
            return Err(Error::InvalidParameter {
                name: "twice_l",
                reason: "apparatus spin must be positive".to_owned(),
            }
            .into());
        }
        let inner = CompositeSystem::new(ApparatusConfig {
            spin: Spin::from_twice(twice_l),
            tilt,
        })?;
        let handle = Box::into_raw(Box::new(ConslabSystem { inner }));
        // SAFETY: checked non-null above.
        unsafe { out.write(handle) };
        Ok(())
    })
}

/// Releases a handle from [`conslab_system_new`]. NULL is a no-op.
///
/// # Safety
/// `sys` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn conslab_system_free(sys: *mut ConslabSystem) {
    if !sys.is_null() {
        // SAFETY: handle came from Box::into_raw in conslab_system_new.
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// # Safety
/// `sys` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn conslab_error_amplitudes(
    sys: *const ConslabSystem,
    out: *mut ConslabErrorAmplitudes,
) -> ConslabStatus {
    guard(|| {
        let sys = unsafe { system(sys) }?;
        let a = apparatus::extract_error_amplitudes(sys)?;
        unsafe {
            write(
                out,
                ConslabErrorAmplitudes {
                    c: a.c,
                    d: a.d,
                    e: a.e,
                    f: a.f,
                },
                "out",
            )
        }
    })
}

/// <J> before and after the measurement unitary for the particle a|up> + b|dn>.
///
/// # Safety
/// `sys` must be a live handle; `before` and `after` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn conslab_premeasure_expectations(
    sys: *const ConslabSystem,
    a: ConslabComplex,
    b: ConslabComplex,
    before: *mut ConslabVec3,
    after: *mut ConslabVec3,
) -> ConslabStatus {
    guard(|| {
        let sys = unsafe { system(sys) }?;
        if before.is_null() {
            return Err(ConslabFailure::Null("before"));
        }
        if after.is_null() {
            return Err(ConslabFailure::Null("after"));
        }
        let (a, b) = (c64(a.re, a.im), c64(b.re, b.im));
        let initial = sys.mean_j(&sys.initial_state(a, b)?)?;
        let fin = sys.mean_j(&apparatus::premeasure(a, b, sys)?)?;
        unsafe {
            write(before, vec3(initial), "before")?;
            write(after, vec3(fin), "after")
        }
    })
}

/// Left-hand side minus (1/2, -i/2, 0) of the three coefficient-matching equations.
///
/// # Safety
/// `sys` must be a live handle; `residuals` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn conslab_matching_residuals(
    sys: *const ConslabSystem,
    residuals: *mut ConslabComplexVec3,
) -> ConslabStatus {
    guard(|| {
        let sys = unsafe { system(sys) }?;
        let report = apparatus::verify_matching_equations(sys)?;
        unsafe { write(residuals, complex_vec(report.residuals), "residuals") }
    })
}

/// Classifies the bookkeeping of total J for the apparatus model.
///
/// # Safety
/// `sys` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn conslab_apparatus_classify(
    sys: *const ConslabSystem,
    a: ConslabComplex,
    b: ConslabComplex,
    out: *mut ConslabViolationKind,
) -> ConslabStatus {
    guard(|| {
        let sys = unsafe { system(sys) }?;
        let (init, branches, cross) = apparatus::apparatus_bookkeeping(c64(a.re, a.im), c64(b.re, b.im), sys)?;
        let report = ideal::classify_violation(init, &branches, cross, ideal::AUDIT_TOLERANCE)?;
        unsafe { write(out, kind(report.kind), "out") }
    })
}

/// |record-stripped cross term| of the particle's S_x after `n_env` environment
/// qubits with per-qubit overlap `overlap` have copied the record.
///
/// # Safety
/// `sys` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn conslab_cross_term_after_amplification(
    sys: *const ConslabSystem,
    a: ConslabComplex,
    b: ConslabComplex,
    n_env: u32,
    overlap: f64,
    out: *mut f64,
) -> ConslabStatus {
    guard(|| {
        let sys = unsafe { system(sys) }?;
        let psi = apparatus::premeasure(c64(a.re, a.im), c64(b.re, b.im), sys)?;
        let env = EnvironmentConfig::new(n_env as usize, overlap)?;
        let amplified = decoherence::amplify_record(&psi, sys, &env)?;
        let op = decoherence::particle_sx(sys)?;
        let cross = decoherence::macroscopic_cross_term(&amplified, &op, sys)?;
        unsafe { write(out, cross.norm(), "out") }
    })
}

/// Cross brackets <u|J|d> forced on an ideal measurement of a|up> + b|dn>.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn conslab_ideal_cross_terms(
    a: ConslabComplex,
    b: ConslabComplex,
    out: *mut ConslabComplexVec3,
) -> ConslabStatus {
    guard(|| {
        let br = ideal::ideal_forced_cross_terms(c64(a.re, a.im), c64(b.re, b.im))?;
        unsafe { write(out, complex_vec(br.cross), "out") }
    })
}

/// Thermal orientation estimate for moment of inertia `i` (kg m^2) at `t` kelvin.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn conslab_thermal(i: f64, t: f64, out: *mut ConslabThermal) -> ConslabStatus {
    guard(|| {
        let th = apparatus::thermal_orientation_uncertainty(i, t)?;
        unsafe {
            write(
                out,
                ConslabThermal {
                    ikt: th.ikt,
                    delta_l: th.delta_l,
                    delta_theta: th.delta_theta,
                },
                "out",
            )
        }
    })
}
