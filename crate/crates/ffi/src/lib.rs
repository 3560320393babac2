//! C ABI for the certification toolkit.
//!
//! Conventions:
//! * handles (`JcOperator`, `JcGrid`) are opaque and freed with their
//!   paired `_free` function;
//! * every call returns a [`JcStatus`]; `JC_OK` means the check passed,
//!   `JC_REFUTED` is a mathematical refutation (the report carries the
//!   witness), `JC_INVALID_INPUT` covers parse and parameter errors;
//! * report strings are JSON, owned by the callee, released with
//!   [`jc_string_free`];
//! * on errors a thread-local message is readable via [`jc_last_error`]
//!   until the next call on the same thread;
//! * panics never unwind across the boundary (`JC_PANIC`).
//!
//! The matching header lives at `include/jetcert.h` (kept in sync by
//! hand; `cbindgen.toml` is provided for regeneration).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use jetcert::grid::{compare, CheckStatus, GridFunction};
use jetcert::map::{CertVerdict, SearchBudget};
use jetcert::operators::{
    certify_pair, check_rc, correspondence_check, OperatorSpec, OperatorSpecFile,
};
use jetcert::slag::{certify_slag_continuity, eig_bound, g_eval, EigBound};

/// Status codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JcStatus {
    /// The operation succeeded and, for checks, the property holds.
    JcOk = 0,
    /// The check ran and refuted the property; the report has a witness.
    JcRefuted = 1,
    /// Unreadable or invalid input.
    JcInvalidInput = 2,
    /// The sampling budget was exhausted without a verdict.
    JcInconclusive = 3,
    /// A required pointer argument was null.
    JcNullPointer = 4,
    /// An internal panic was caught at the boundary.
    JcPanic = 5,
}

/// Opaque operator handle.
pub struct JcOperator {
    inner: OperatorSpec,
}

/// Opaque grid-function handle.
pub struct JcGrid {
    inner: GridFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

/// Last error message on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn jc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn jc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by a `jetcert` function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn jc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, JcStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(JcStatus::JcNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        JcStatus::JcInvalidInput
    })
}

fn emit_json(out: *mut *mut c_char, json: String) -> JcStatus {
    if out.is_null() {
        set_error("null output pointer");
        return JcStatus::JcNullPointer;
    }
    match CString::new(json) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            JcStatus::JcOk
        }
        Err(_) => {
            set_error("report contained an interior NUL byte");
            JcStatus::JcPanic
        }
    }
}

fn guarded(f: impl FnOnce() -> JcStatus) -> JcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            JcStatus::JcPanic
        }
    }
}

/// Parses an operator spec (JSON schema of the CLI) into a handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_operator_from_json(
    json: *const c_char,
    out: *mut *mut JcOperator,
) -> JcStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return JcStatus::JcNullPointer;
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match OperatorSpecFile::from_json(text).and_then(|f| f.build()) {
            Ok(op) => {
                *out = Box::into_raw(Box::new(JcOperator { inner: op }));
                JcStatus::JcOk
            }
            Err(e) => {
                set_error(e.to_string());
                JcStatus::JcInvalidInput
            }
        }
    })
}

/// # Safety
/// `op` must come from [`jc_operator_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn jc_operator_free(op: *mut JcOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Parses a grid-function JSON file into a handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_grid_from_json(json: *const c_char, out: *mut *mut JcGrid) -> JcStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return JcStatus::JcNullPointer;
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match GridFunction::from_json(text) {
            Ok(grid) => {
                *out = Box::into_raw(Box::new(JcGrid { inner: grid }));
                JcStatus::JcOk
            }
            Err(e) => {
                set_error(e.to_string());
                JcStatus::JcInvalidInput
            }
        }
    })
}

/// # Safety
/// `grid` must come from [`jc_grid_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn jc_grid_free(grid: *mut JcGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

fn interior_region(domain: &jetcert::map::BoxDomain) -> jetcert::map::BoxDomain {
    let mut lower = domain.lower.clone();
    let mut upper = domain.upper.clone();
    for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
        let pad = 0.01 * (*u - *l);
        *l += pad;
        *u -= pad;
    }
    jetcert::map::BoxDomain::new(lower, upper).expect("padded region")
}

/// Runs the full structural certification (pair conditions, translation
/// regularity, correspondence) and returns the bundled JSON report.
/// `JC_OK` if every condition passes, `JC_REFUTED` otherwise.
///
/// # Safety
/// `op` must be a live operator handle; `report_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_operator_certify(
    op: *const JcOperator,
    seed: u64,
    pairs: u32,
    jets: u32,
    report_out: *mut *mut c_char,
) -> JcStatus {
    guarded(|| {
        let Some(handle) = op.as_ref() else {
            set_error("null operator handle");
            return JcStatus::JcNullPointer;
        };
        let budget =
            SearchBudget::new(seed).with_pairs(pairs.max(1) as usize, jets.max(1) as usize);
        let region = interior_region(&handle.inner.domain);
        let etas = [0.1, 0.5, 1.0];
        let pair = match certify_pair(&handle.inner, &region, &budget) {
            Ok(p) => p,
            Err(e) => {
                set_error(e.to_string());
                return JcStatus::JcInvalidInput;
            }
        };
        let rc = match check_rc(&handle.inner, &etas, &region, &budget) {
            Ok(r) => r,
            Err(e) => {
                set_error(e.to_string());
                return JcStatus::JcInvalidInput;
            }
        };
        let corr = match correspondence_check(&handle.inner, &region, &budget) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return JcStatus::JcInvalidInput;
            }
        };
        let rc_pass = rc.verdict == CertVerdict::Certified;
        let all = pair.pass() && rc_pass && corr.pass;
        let report = serde_json::json!({
            "pair_certificate": pair,
            "rc_certificate": rc,
            "correspondence": corr,
            "pass": all,
        });
        let status = if all {
            JcStatus::JcOk
        } else if rc.verdict == CertVerdict::Inconclusive && pair.pass() && corr.pass {
            JcStatus::JcInconclusive
        } else {
            JcStatus::JcRefuted
        };
        let emitted = emit_json(report_out, report.to_string());
        if emitted != JcStatus::JcOk {
            return emitted;
        }
        status
    })
}

/// Phase-continuity certification of a phase grid for the arctan
/// operator in dimension `dim`. `JC_OK` certified, `JC_REFUTED` refuted
/// with a block witness in the report, `JC_INCONCLUSIVE` otherwise.
///
/// # Safety
/// `grid` must be a live grid handle; `report_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_slag_certify(
    grid: *const JcGrid,
    dim: u32,
    seed: u64,
    draws: u32,
    report_out: *mut *mut c_char,
) -> JcStatus {
    guarded(|| {
        let Some(handle) = grid.as_ref() else {
            set_error("null grid handle");
            return JcStatus::JcNullPointer;
        };
        let etas = [0.1, 0.5, 1.0];
        match certify_slag_continuity(&handle.inner, dim as usize, &etas, draws as usize, seed) {
            Ok(report) => {
                let status = match report.verdict {
                    CertVerdict::Certified => JcStatus::JcOk,
                    CertVerdict::Refuted => JcStatus::JcRefuted,
                    CertVerdict::Inconclusive => JcStatus::JcInconclusive,
                };
                let emitted = emit_json(
                    report_out,
                    serde_json::to_string(&report).unwrap_or_default(),
                );
                if emitted != JcStatus::JcOk {
                    return emitted;
                }
                status
            }
            Err(e) => {
                set_error(e.to_string());
                JcStatus::JcInvalidInput
            }
        }
    })
}

/// Comparison harness on the operator's branch map: `JC_OK` when the
/// boundary inequality propagates, `JC_REFUTED` when a precondition fails
/// or interior violations appear (see the report for which).
///
/// # Safety
/// All handles must be live; `report_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_compare(
    op: *const JcOperator,
    u: *const JcGrid,
    v: *const JcGrid,
    report_out: *mut *mut c_char,
) -> JcStatus {
    guarded(|| {
        let (Some(op), Some(u), Some(v)) = (op.as_ref(), u.as_ref(), v.as_ref()) else {
            set_error("null handle argument");
            return JcStatus::JcNullPointer;
        };
        if u.inner.dim() != op.inner.dim || v.inner.dim() != op.inner.dim {
            set_error("grid dimension does not match the operator");
            return JcStatus::JcInvalidInput;
        }
        let map = op.inner.theta_from_pair();
        match compare(&u.inner, &v.inner, &map) {
            Ok(verdict) => {
                let status = match verdict.status {
                    CheckStatus::Pass | CheckStatus::VacuousPass => JcStatus::JcOk,
                    CheckStatus::Violations | CheckStatus::PreconditionFailed => {
                        JcStatus::JcRefuted
                    }
                };
                let emitted = emit_json(
                    report_out,
                    serde_json::to_string(&verdict).unwrap_or_default(),
                );
                if emitted != JcStatus::JcOk {
                    return emitted;
                }
                status
            }
            Err(e) => {
                set_error(e.to_string());
                JcStatus::JcInvalidInput
            }
        }
    })
}

/// Eigenvalue bound for the arctan operator over `[lo, hi]` in dimension
/// `dim`; writes `+inf` when the interval touches a special phase value.
///
/// # Safety
/// `c_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jc_eig_bound(lo: f64, hi: f64, dim: u32, c_out: *mut f64) -> JcStatus {
    guarded(|| {
        if c_out.is_null() {
            set_error("null output pointer");
            return JcStatus::JcNullPointer;
        }
        match eig_bound((lo, hi), dim as usize) {
            Ok(EigBound::Bounded(c)) => {
                *c_out = c;
                JcStatus::JcOk
            }
            Ok(EigBound::Unbounded) => {
                *c_out = f64::INFINITY;
                JcStatus::JcOk
            }
            Err(e) => {
                set_error(e.to_string());
                JcStatus::JcInvalidInput
            }
        }
    })
}

/// Sum of arctangents of the eigenvalues of a symmetric matrix given as
/// its upper triangle, row-major, `dim*(dim+1)/2` entries.
///
/// # Safety
/// `upper` must point to `dim*(dim+1)/2` doubles; `g_out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn jc_phase_eval(dim: u32, upper: *const f64, g_out: *mut f64) -> JcStatus {
    guarded(|| {
        if upper.is_null() || g_out.is_null() {
            set_error("null pointer argument");
            return JcStatus::JcNullPointer;
        }
        let n = dim as usize;
        if n == 0 {
            set_error("dimension must be >= 1");
            return JcStatus::JcInvalidInput;
        }
        let len = n * (n + 1) / 2;
        let slice = std::slice::from_raw_parts(upper, len);
        match jetcert::jets::SymMat::from_upper(n, slice) {
            Ok(m) => {
                *g_out = g_eval(&m);
                JcStatus::JcOk
            }
            Err(e) => {
                set_error(e.to_string());
                JcStatus::JcInvalidInput
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn cstring(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn take_string(ptr: *mut c_char) -> String {
        assert!(!ptr.is_null());
        let s = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string();
        unsafe { jc_string_free(ptr) };
        s
    }

    fn ma_spec_json(h: f64) -> String {
        serde_json::json!({
            "kind": "monge_ampere",
            "dim": 2,
            "domain": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
            "coefficients": {"h": {"grid_shape": [2, 2], "values": [h, h, h, h]}},
        })
        .to_string()
    }

    #[test]
    fn operator_roundtrip_and_certify() {
        let json = cstring(&ma_spec_json(1.0));
        let mut op: *mut JcOperator = ptr::null_mut();
        assert_eq!(
            unsafe { jc_operator_from_json(json.as_ptr(), &mut op) },
            JcStatus::JcOk
        );
        let mut report: *mut c_char = ptr::null_mut();
        let status = unsafe { jc_operator_certify(op, 3, 16, 6, &mut report) };
        assert_eq!(status, JcStatus::JcOk);
        let text = take_string(report);
        assert!(text.contains("\"pass\":true"));
        unsafe { jc_operator_free(op) };
    }

    #[test]
    fn negative_curvature_is_refuted() {
        let json = cstring(&ma_spec_json(-1.0));
        let mut op: *mut JcOperator = ptr::null_mut();
        assert_eq!(
            unsafe { jc_operator_from_json(json.as_ptr(), &mut op) },
            JcStatus::JcOk
        );
        let mut report: *mut c_char = ptr::null_mut();
        let status = unsafe { jc_operator_certify(op, 3, 16, 6, &mut report) };
        assert_eq!(status, JcStatus::JcRefuted);
        let text = take_string(report);
        assert!(text.contains("pb1"));
        unsafe { jc_operator_free(op) };
    }

    #[test]
    fn parse_errors_set_the_message() {
        let json = cstring("{ nope");
        let mut op: *mut JcOperator = ptr::null_mut();
        assert_eq!(
            unsafe { jc_operator_from_json(json.as_ptr(), &mut op) },
            JcStatus::JcInvalidInput
        );
        let msg = unsafe { CStr::from_ptr(jc_last_error()) }.to_str().unwrap();
        assert!(msg.contains("operator spec"));
        assert_eq!(
            unsafe { jc_operator_from_json(ptr::null(), &mut op) },
            JcStatus::JcNullPointer
        );
    }

    #[test]
    fn slag_over_ffi() {
        let grid = jetcert::grid::GridFunction::from_fn(
            jetcert::map::BoxDomain::unit(2),
            vec![17, 17],
            |x| 0.5 - x[0],
        )
        .unwrap();
        let json = cstring(&grid.to_json().unwrap());
        let mut handle: *mut JcGrid = ptr::null_mut();
        assert_eq!(
            unsafe { jc_grid_from_json(json.as_ptr(), &mut handle) },
            JcStatus::JcOk
        );
        let mut report: *mut c_char = ptr::null_mut();
        let status = unsafe { jc_slag_certify(handle, 2, 7, 500, &mut report) };
        assert_eq!(status, JcStatus::JcRefuted);
        let text = take_string(report);
        assert!(text.contains("witness"));
        unsafe { jc_grid_free(handle) };
    }

    #[test]
    fn eig_bound_and_phase_eval() {
        let mut c = 0.0;
        let status = unsafe {
            jc_eig_bound(
                std::f64::consts::PI / 6.0,
                std::f64::consts::FRAC_PI_2,
                2,
                &mut c,
            )
        };
        assert_eq!(status, JcStatus::JcOk);
        assert!((c - (2.0 + 3.0f64.sqrt())).abs() < 1e-9);

        let status = unsafe { jc_eig_bound(0.0, std::f64::consts::FRAC_PI_2, 2, &mut c) };
        assert_eq!(status, JcStatus::JcOk);
        assert!(c.is_infinite());

        // Identity in dimension 3: G = 3 arctan(1).
        let upper = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let mut g = 0.0;
        let status = unsafe { jc_phase_eval(3, upper.as_ptr(), &mut g) };
        assert_eq!(status, JcStatus::JcOk);
        assert!((g - 3.0 * std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn compare_over_ffi() {
        let domain = jetcert::map::BoxDomain::new(vec![-0.7, -0.7], vec![0.7, 0.7]).unwrap();
        let spec = serde_json::json!({
            "kind": "hyperbolic_affine_sphere",
            "dim": 2,
            "domain": {"lower": [-0.7, -0.7], "upper": [0.7, 0.7]},
            "coefficients": {"h": jetcert::operators::coeff_from_fn(&domain, &[17, 17], |x| {
                (0.6 - 0.5 * (x[0] * x[0] + x[1] * x[1])).powi(4)
            })},
        })
        .to_string();
        let mut op: *mut JcOperator = ptr::null_mut();
        let spec_c = cstring(&spec);
        assert_eq!(
            unsafe { jc_operator_from_json(spec_c.as_ptr(), &mut op) },
            JcStatus::JcOk
        );
        let star = jetcert::grid::GridFunction::from_fn(domain, vec![17, 17], |x| {
            0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.6
        })
        .unwrap();
        let sub = star.map_values(|v| v - 0.1);
        let u_c = cstring(&sub.to_json().unwrap());
        let v_c = cstring(&star.to_json().unwrap());
        let (mut u, mut v): (*mut JcGrid, *mut JcGrid) = (ptr::null_mut(), ptr::null_mut());
        unsafe {
            assert_eq!(jc_grid_from_json(u_c.as_ptr(), &mut u), JcStatus::JcOk);
            assert_eq!(jc_grid_from_json(v_c.as_ptr(), &mut v), JcStatus::JcOk);
        }
        let mut report: *mut c_char = ptr::null_mut();
        let status = unsafe { jc_compare(op, u, v, &mut report) };
        assert_eq!(status, JcStatus::JcOk);
        take_string(report);
        unsafe {
            jc_grid_free(u);
            jc_grid_free(v);
            jc_operator_free(op);
        }
    }
}
