//! C ABI over `hessian_lab`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `hl_*_free`. Every fallible call returns an
//! [`HlStatus`]; the message of the last failure on the calling thread is
//! available through [`hl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hessian_lab::background::BackgroundData;
use hessian_lab::cone::{OperatorKind, OperatorSpec};
use hessian_lab::ddc::Backend;
use hessian_lab::expr::Expr;
use hessian_lab::field::{TorusField, TorusGrid};
use hessian_lab::herm::{generalized_eigenvalues, HermMatrix, C64};
use hessian_lab::regularize::{inf_convolution, sup_convolution};
use hessian_lab::solver::{solve_fixed_rhs, Normalization, SolveConfig, SolveReport};
use hessian_lab::LabError;

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutsideCone = 3,
    NonPositiveMatrix = 4,
    NoConvergence = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Differentiation backend for solves.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HlBackend {
    FiniteDifference = 0,
    Spectral = 1,
}

/// Operator with its cone.
pub struct HlOperator(OperatorSpec);

/// Grid function on the torus.
pub struct HlField(TorusField);

/// Metric, form and cone margin.
pub struct HlBackground(BackgroundData);

/// Result of a solve, including the solution field.
pub struct HlSolveReport(SolveReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &LabError) -> HlStatus {
    match err {
        LabError::OutsideCone { .. } | LabError::BoundaryDegenerate { .. } | LabError::ConeEscape { .. } => HlStatus::OutsideCone,
        LabError::NonPositiveMetric { .. } | LabError::NonPositiveInput { .. } => HlStatus::NonPositiveMatrix,
        LabError::NoConvergence { .. } => HlStatus::NoConvergence,
        LabError::Io(_) => HlStatus::Io,
        LabError::RadiusExceedsTorus { .. } | LabError::MonotonicityViolation { .. } => HlStatus::Numerical,
        _ => HlStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HlStatus>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside hessian_lab".into());
            HlStatus::Panic
        }
    }
}

fn lab<T>(r: hessian_lab::Result<T>) -> Result<T, HlStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn invalid(msg: &str) -> HlStatus {
    set_error(msg.into());
    HlStatus::InvalidArgument
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, HlStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        HlStatus::NullPointer
    })
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], HlStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        set_error("null array".into());
        return Err(HlStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<T>(dst: *mut *mut T, v: T) -> Result<(), HlStatus> {
    if dst.is_null() {
        set_error("null output pointer".into());
        return Err(HlStatus::NullPointer);
    }
    *dst = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, HlStatus> {
    if p.is_null() {
        set_error("null string".into());
        return Err(HlStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not UTF-8"))
}

/// Hermitian matrix from separate row-major real and imaginary parts;
/// a null imaginary part means a real matrix.
unsafe fn herm(n: usize, re: *const f64, im: *const f64) -> Result<HermMatrix, HlStatus> {
    let re = slice(re, n * n)?;
    let entries = if im.is_null() {
        re.iter().map(|&x| C64::new(x, 0.0)).collect()
    } else {
        let im = slice(im, n * n)?;
        re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect()
    };
    lab(HermMatrix::new(n, entries))
}

/// Copies the last error message of this thread into `buf` and returns
/// the full message length, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if !buf.is_null() && cap > 0 {
            let k = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// `sigma_k^{1/k}` in dimension `n`.
///
/// # Safety
/// `op` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_sigma_k(n: usize, k: usize, op: *mut *mut HlOperator) -> HlStatus {
    guard(|| out(op, HlOperator(lab(OperatorSpec::sigma_k(n, k))?)))
}

/// Operator from a JSON document such as `{"kind": "pfold_sum", "p": 2}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `op` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_from_json(n: usize, json: *const c_char, op: *mut *mut HlOperator) -> HlStatus {
    guard(|| {
        let kind: OperatorKind = serde_json::from_str(cstr(json)?).map_err(|e| invalid(&e.to_string()))?;
        out(op, HlOperator(lab(OperatorSpec::new(n, kind))?))
    })
}

/// `f(lambda)` for `n` eigenvalues.
///
/// # Safety
/// `lambda` must hold `len` values and `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_eval(op: *const HlOperator, lambda: *const f64, len: usize, value: *mut f64) -> HlStatus {
    guard(|| {
        let op = deref(op)?;
        let l = slice(lambda, len)?;
        if len != op.0.n {
            return Err(invalid("eigenvalue count differs from the operator dimension"));
        }
        let v = lab(op.0.eval(l))?;
        *value.as_mut().ok_or(HlStatus::NullPointer)? = v;
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn hl_operator_free(op: *mut HlOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Ascending eigenvalues of `A` relative to `g > 0`, written to `out`
/// (`n` values).
///
/// # Safety
/// Matrices hold `n * n` row-major values; imaginary parts may be null.
#[no_mangle]
pub unsafe extern "C" fn hl_generalized_eigenvalues(
    n: usize,
    a_re: *const f64,
    a_im: *const f64,
    g_re: *const f64,
    g_im: *const f64,
    out_values: *mut f64,
) -> HlStatus {
    guard(|| {
        let a = herm(n, a_re, a_im)?;
        let g = herm(n, g_re, g_im)?;
        let s = lab(generalized_eigenvalues(&a, &g))?;
        if out_values.is_null() {
            return Err(HlStatus::NullPointer);
        }
        ptr::copy_nonoverlapping(s.values.as_ptr(), out_values, n);
        Ok(())
    })
}

/// Constant background on the grid `(n, m)` with metric `g` and form
/// `chi`, checked against the cone of `op`.
///
/// # Safety
/// Matrices hold `n * n` row-major values; imaginary parts may be null.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hl_background_constant(
    op: *const HlOperator,
    m: usize,
    g_re: *const f64,
    g_im: *const f64,
    chi_re: *const f64,
    chi_im: *const f64,
    bg: *mut *mut HlBackground,
) -> HlStatus {
    guard(|| {
        let op = deref(op)?;
        let n = op.0.n;
        let grid = lab(TorusGrid::new(n, m))?;
        let data = lab(BackgroundData::constant(grid, herm(n, g_re, g_im)?, herm(n, chi_re, chi_im)?, &op.0.cone()))?;
        out(bg, HlBackground(data))
    })
}

/// Cone margin `c_star` of the background form.
///
/// # Safety
/// `bg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hl_background_c_star(bg: *const HlBackground) -> f64 {
    deref(bg).map_or(f64::NAN, |b| b.0.c_star)
}

/// # Safety
/// `bg` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn hl_background_free(bg: *mut HlBackground) {
    if !bg.is_null() {
        drop(Box::from_raw(bg));
    }
}

/// Field from `m^{2n}` values in row-major order, last axis fastest.
///
/// # Safety
/// `values` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn hl_field_new(n: usize, m: usize, values: *const f64, len: usize, field: *mut *mut HlField) -> HlStatus {
    guard(|| {
        let grid = lab(TorusGrid::new(n, m))?;
        let v = slice(values, len)?.to_vec();
        out(field, HlField(lab(TorusField::new(grid, v))?))
    })
}

/// Field sampled from an expression in `x0..x{2n-1}`.
///
/// # Safety
/// `expr` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hl_field_from_expr(n: usize, m: usize, expr: *const c_char, field: *mut *mut HlField) -> HlStatus {
    guard(|| {
        let grid = lab(TorusGrid::new(n, m))?;
        let e = lab(Expr::parse(cstr(expr)?))?;
        out(field, HlField(lab(e.field(grid, None))?))
    })
}

/// Number of grid points.
///
/// # Safety
/// `field` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hl_field_len(field: *const HlField) -> usize {
    deref(field).map_or(0, |f| f.0.len())
}

/// Copies the values into `dst`, which must hold `hl_field_len` values.
///
/// # Safety
/// `dst` must be valid for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn hl_field_values(field: *const HlField, dst: *mut f64, cap: usize) -> HlStatus {
    guard(|| {
        let f = deref(field)?;
        if cap < f.0.len() {
            return Err(invalid("destination too small"));
        }
        if dst.is_null() {
            return Err(HlStatus::NullPointer);
        }
        ptr::copy_nonoverlapping(f.0.values.as_ptr(), dst, f.0.len());
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn hl_field_free(field: *mut HlField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Sup-convolution (`inf_conv = 0`) or inf-convolution (`inf_conv != 0`)
/// with parameter `eps`.
///
/// # Safety
/// `field` must be a valid handle and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_convolution(field: *const HlField, eps: f64, inf_conv: i32, result: *mut *mut HlField) -> HlStatus {
    guard(|| {
        let f = deref(field)?;
        let c = if inf_conv == 0 { sup_convolution(&f.0, eps) } else { inf_convolution(&f.0, eps) };
        out(result, HlField(lab(c)?.field))
    })
}

/// Solves `F(chi + dd^c phi) = e^{G + c}` with `sup phi = 0`.
///
/// # Safety
/// Handles must be valid and `report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_solve_fixed(
    op: *const HlOperator,
    bg: *const HlBackground,
    g: *const HlField,
    newton_tol: f64,
    backend: HlBackend,
    report: *mut *mut HlSolveReport,
) -> HlStatus {
    guard(|| {
        let (op, bg, g) = (deref(op)?, deref(bg)?, deref(g)?);
        let cfg = SolveConfig {
            newton_tol,
            normalization: Normalization::SupZero,
            backend: match backend {
                HlBackend::FiniteDifference => Backend::Fd,
                HlBackend::Spectral => Backend::Spectral,
            },
            ..SolveConfig::default()
        };
        lab(cfg.validate())?;
        out(report, HlSolveReport(lab(solve_fixed_rhs(&op.0, &bg.0, &g.0, &cfg))?))
    })
}

/// The constant `c` of a solve.
///
/// # Safety
/// `report` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hl_report_c(report: *const HlSolveReport) -> f64 {
    deref(report).map_or(f64::NAN, |r| r.0.c)
}

/// Newton iterations over all continuation steps.
///
/// # Safety
/// `report` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hl_report_newton_iterations(report: *const HlSolveReport) -> usize {
    deref(report).map_or(0, |r| r.0.newton_iterations)
}

/// Final sup-norm log-residual.
///
/// # Safety
/// `report` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hl_report_residual(report: *const HlSolveReport) -> f64 {
    deref(report).map_or(f64::NAN, |r| r.0.final_residual)
}

/// Copy of the solution field.
///
/// # Safety
/// `report` must be a valid handle and `field` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_report_phi(report: *const HlSolveReport, field: *mut *mut HlField) -> HlStatus {
    guard(|| {
        let r = deref(report)?;
        let phi = r.0.phi.as_ref().ok_or_else(|| invalid("report has no field"))?;
        out(field, HlField(phi.clone()))
    })
}

/// # Safety
/// `report` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn hl_report_free(report: *mut HlSolveReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_solve() {
        unsafe {
            let mut op = ptr::null_mut();
            assert_eq!(hl_operator_sigma_k(1, 1, &mut op), HlStatus::Ok);
            let id = [1.0];
            let mut bg = ptr::null_mut();
            assert_eq!(hl_background_constant(op, 16, id.as_ptr(), ptr::null(), id.as_ptr(), ptr::null(), &mut bg), HlStatus::Ok);
            assert!((hl_background_c_star(bg) - 1.0).abs() < 1e-12);
            let mut g = ptr::null_mut();
            let e = CString::new("0.2*cos(2*pi*x0)").unwrap();
            assert_eq!(hl_field_from_expr(1, 16, e.as_ptr(), &mut g), HlStatus::Ok);
            let mut rep = ptr::null_mut();
            assert_eq!(hl_solve_fixed(op, bg, g, 1e-10, HlBackend::FiniteDifference, &mut rep), HlStatus::Ok);
            assert!(hl_report_residual(rep) <= 1e-10);
            let mut phi = ptr::null_mut();
            assert_eq!(hl_report_phi(rep, &mut phi), HlStatus::Ok);
            let mut vals = vec![0.0; hl_field_len(phi)];
            assert_eq!(hl_field_values(phi, vals.as_mut_ptr(), vals.len()), HlStatus::Ok);
            assert!(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max).abs() < 1e-14);
            hl_field_free(phi);
            hl_report_free(rep);
            hl_field_free(g);
            hl_background_free(bg);
            hl_operator_free(op);
        }
    }

    #[test]
    fn errors_are_reported() {
        unsafe {
            let mut op = ptr::null_mut();
            assert_eq!(hl_operator_sigma_k(2, 3, &mut op), HlStatus::InvalidArgument);
            assert!(op.is_null());
            let mut buf = [0 as c_char; 128];
            let len = hl_last_error(buf.as_mut_ptr(), buf.len());
            assert!(len > 0);
            let msg = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
            assert!(msg.contains("out of range"), "{msg}");
            let mut v = 0.0;
            assert_eq!(hl_operator_eval(ptr::null(), ptr::null(), 0, &mut v), HlStatus::NullPointer);
            let j = CString::new(r#"{"kind": "pfold_sum", "p": 2}"#).unwrap();
            assert_eq!(hl_operator_from_json(3, j.as_ptr(), &mut op), HlStatus::Ok);
            let l = [1.0, 1.0, 1.0];
            assert_eq!(hl_operator_eval(op, l.as_ptr(), 3, &mut v), HlStatus::Ok);
            assert!(v > 0.0);
            hl_operator_free(op);
        }
    }

    #[test]
    fn eigenvalues_through_the_abi() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let g = [1.0, 0.0, 0.0, 1.0];
        let mut out = [0.0; 2];
        let st = unsafe { hl_generalized_eigenvalues(2, a.as_ptr(), ptr::null(), g.as_ptr(), ptr::null(), out.as_mut_ptr()) };
        assert_eq!(st, HlStatus::Ok);
        let d = (1.0f64 + 4.0).sqrt();
        assert!((out[0] - (5.0 - d) / 2.0).abs() < 1e-12 && (out[1] - (5.0 + d) / 2.0).abs() < 1e-12);
    }
}
