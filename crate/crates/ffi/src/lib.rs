//! C ABI for opwlab.
//!
//! Signals and operators cross the boundary as opaque handles that the
//! caller frees with the matching `*_free` function. Every fallible call
//! returns an [`OpwStatus`]; on failure, [`opw_last_error`] describes what
//! went wrong on the calling thread. Reports come back as JSON strings owned
//! by the caller and released with [`opw_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;
use opwlab::operator::{self, OperatorRep, SupportBox};
use opwlab::pipeline::{self, BudgetSplit, TheoremSetup};
use opwlab::signal::{self, Grid1D, SampledSignal, SignalKind};
use opwlab::synth::SynthesisConfig;
use opwlab::Error;

/// Opaque sampled signal on a uniform grid.
pub struct OpwSignal(SampledSignal);

/// Opaque operator in one of its structured or dense representations.
pub struct OpwOperator(OperatorRep);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GridMismatch = 3,
    NumericalFailure = 4,
    SizeCap = 5,
    NotHilbertSchmidt = 6,
    Resolution = 7,
    Parse = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpwSignalKind {
    /// `chi_[-p, p]`.
    Indicator = 0,
    /// `sin(2 pi p x)/(pi x)`.
    Sinc = 1,
    /// `exp(-pi (x/p)^2)`.
    Gaussian = 2,
    /// `sin(2 pi p x)`.
    Sinusoid = 3,
    /// Inverse grid transform of `chi_[-p, p]`.
    DiscreteSinc = 4,
}

/// Spreading support of an operator.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OpwBox {
    pub t_min: f64,
    pub t_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Nonzero when the operator has no spreading above the threshold.
    pub empty: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OpwStatus {
    match e {
        Error::InvalidArgument(_) | Error::GridTooSmall(_) | Error::UndefinedRatio(_) | Error::DivisionFloor { .. } => {
            OpwStatus::InvalidArgument
        }
        Error::GridMismatch(_) => OpwStatus::GridMismatch,
        Error::NumericalFailure(_) => OpwStatus::NumericalFailure,
        Error::SizeCap { .. } => OpwStatus::SizeCap,
        Error::NotHilbertSchmidt(_) => OpwStatus::NotHilbertSchmidt,
        Error::Resolution(_) => OpwStatus::Resolution,
        Error::Parse { .. } | Error::Json(_) => OpwStatus::Parse,
        Error::Io(_) => OpwStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus a thread-local
/// message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OpwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OpwStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            OpwStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            OpwStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn json_string(v: serde_json::Result<String>) -> Result<*mut c_char, Fail> {
    let s = v.map_err(Error::from)?;
    Ok(CString::new(s).map_err(|e| Error::InvalidArgument(e.to_string()))?.into_raw())
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn opw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn opw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn opw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a signal with samples `re[j] + i im[j]` at `x0 + j dx`. `im` may be
/// NULL for a real signal.
///
/// # Safety
/// `re` (and `im` unless NULL) must point to `n` readable doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_new(
    x0: f64,
    dx: f64,
    n: usize,
    re: *const f64,
    im: *const f64,
    out_signal: *mut *mut OpwSignal,
) -> OpwStatus {
    guard(|| {
        let out_signal = out(out_signal, "out_signal")?;
        if re.is_null() {
            return Err(Fail::Null("re"));
        }
        let grid = Grid1D::new(x0, dx, n)?;
        let re = std::slice::from_raw_parts(re, n);
        let samples: Vec<Complex64> = if im.is_null() {
            re.iter().map(|&r| Complex64::new(r, 0.0)).collect()
        } else {
            re.iter().zip(std::slice::from_raw_parts(im, n)).map(|(&r, &i)| Complex64::new(r, i)).collect()
        };
        *out_signal = boxed(OpwSignal(SampledSignal::new(grid, samples)?));
        Ok(())
    })
}

/// Samples a standard signal with parameter `p` on `x0 + j dx`.
///
/// # Safety
/// `out_signal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_sample(
    kind: OpwSignalKind,
    p: f64,
    x0: f64,
    dx: f64,
    n: usize,
    out_signal: *mut *mut OpwSignal,
) -> OpwStatus {
    guard(|| {
        let out_signal = out(out_signal, "out_signal")?;
        let grid = Grid1D::new(x0, dx, n)?;
        let s = match kind {
            OpwSignalKind::Indicator => signal::sample(&SignalKind::Indicator(p), &grid)?,
            OpwSignalKind::Sinc => signal::sample(&SignalKind::Sinc(p), &grid)?,
            OpwSignalKind::Gaussian => signal::sample(&SignalKind::Gaussian(p), &grid)?,
            OpwSignalKind::Sinusoid => signal::sample(&SignalKind::Sinusoid { freq: p, phase: 0.0 }, &grid)?,
            OpwSignalKind::DiscreteSinc => signal::discrete_sinc(p, &grid)?,
        };
        *out_signal = boxed(OpwSignal(s));
        Ok(())
    })
}

/// Reads the grid of a signal.
///
/// # Safety
/// `s` must be a live signal; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_grid(s: *const OpwSignal, x0: *mut f64, dx: *mut f64, n: *mut usize) -> OpwStatus {
    guard(|| {
        let g = *deref(s, "signal")?.0.grid();
        *out(x0, "x0")? = g.x0();
        *out(dx, "dx")? = g.dx();
        *out(n, "n")? = g.n();
        Ok(())
    })
}

/// Copies up to `len` samples into `re` / `im` (either may be NULL).
///
/// # Safety
/// `s` must be a live signal; non-NULL buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_samples(s: *const OpwSignal, re: *mut f64, im: *mut f64, len: usize) -> OpwStatus {
    guard(|| {
        let samples = deref(s, "signal")?.0.samples();
        if len != samples.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} samples, signal has {}", samples.len())).into());
        }
        for (j, v) in samples.iter().enumerate() {
            if !re.is_null() {
                *re.add(j) = v.re;
            }
            if !im.is_null() {
                *im.add(j) = v.im;
            }
        }
        Ok(())
    })
}

/// `L^2` norm by grid quadrature.
///
/// # Safety
/// `s` must be a live signal; `norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_l2_norm(s: *const OpwSignal, norm: *mut f64) -> OpwStatus {
    guard(|| {
        *out(norm, "norm")? = deref(s, "signal")?.0.l2_norm();
        Ok(())
    })
}

/// Continuous-normalised transform onto the dual grid.
///
/// # Safety
/// `s` must be a live signal; `out_signal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_dft(s: *const OpwSignal, out_signal: *mut *mut OpwSignal) -> OpwStatus {
    guard(|| {
        let s = deref(s, "signal")?;
        *out(out_signal, "out_signal")? = boxed(OpwSignal(s.0.dft()));
        Ok(())
    })
}

/// Inverse of [`opw_signal_dft`].
///
/// # Safety
/// `s` must be a live signal; `out_signal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_idft(s: *const OpwSignal, out_signal: *mut *mut OpwSignal) -> OpwStatus {
    guard(|| {
        let s = deref(s, "signal")?;
        *out(out_signal, "out_signal")? = boxed(OpwSignal(s.0.idft()));
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn opw_signal_free(s: *mut OpwSignal) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Loads an operator written by `opwlab run` (`operator.json`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_op` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_read(path: *const c_char, out_op: *mut *mut OpwOperator) -> OpwStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out_op = out(out_op, "out_op")?;
        *out_op = boxed(OpwOperator(operator::read_operator(path)?));
        Ok(())
    })
}

/// Writes `<dir>/<stem>.json` plus one text file per factor.
///
/// # Safety
/// `op` must be live; `dir` and `stem` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_write(op: *const OpwOperator, dir: *const c_char, stem: *const c_char) -> OpwStatus {
    guard(|| {
        let op = deref(op, "operator")?;
        let dir = path_arg(dir, "dir")?;
        let stem = path_arg(stem, "stem")?.to_str().unwrap_or_default();
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        operator::write_operator(&op.0, dir, stem)?;
        Ok(())
    })
}

/// Representation name: `multiplication`, `convolution`, `separable`,
/// `separable_freq` or `dense`. Static string; NULL for a NULL handle.
///
/// # Safety
/// `op` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_kind(op: *const OpwOperator) -> *const c_char {
    let Some(op) = op.as_ref() else { return ptr::null() };
    match op.0 {
        OperatorRep::Multiplication(_) => c"multiplication".as_ptr(),
        OperatorRep::Convolution(_) => c"convolution".as_ptr(),
        OperatorRep::Separable { .. } => c"separable".as_ptr(),
        OperatorRep::SeparableFreq { .. } => c"separable_freq".as_ptr(),
        OperatorRep::Dense(_) => c"dense".as_ptr(),
    }
}

/// `H f` on the grid of `f`. Dense operators honour `OPWLAB_DENSE_CAP`.
///
/// # Safety
/// `op` and `f` must be live; `out_signal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_apply(
    op: *const OpwOperator,
    f: *const OpwSignal,
    out_signal: *mut *mut OpwSignal,
) -> OpwStatus {
    guard(|| {
        let op = deref(op, "operator")?;
        let f = deref(f, "signal")?;
        let out_signal = out(out_signal, "out_signal")?;
        let opts = operator::ApplyOptions::from_env()?;
        *out_signal = boxed(OpwSignal(operator::apply_with(&op.0, &f.0, &opts)?));
        Ok(())
    })
}

/// Hilbert-Schmidt norm `||eta||_2`. Fails with `NotHilbertSchmidt` for pure
/// multiplication and convolution operators.
///
/// # Safety
/// `op` must be live; `norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_hs_norm(op: *const OpwOperator, norm: *mut f64) -> OpwStatus {
    guard(|| {
        let op = deref(op, "operator")?;
        *out(norm, "norm")? = operator::hs_norm(&op.0)?;
        Ok(())
    })
}

/// Sup norm of the symbol.
///
/// # Safety
/// `op` must be live; `norm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_symbol_sup(op: *const OpwOperator, norm: *mut f64) -> OpwStatus {
    guard(|| {
        let op = deref(op, "operator")?;
        *out(norm, "norm")? = operator::symbol_sup_norm(&op.0);
        Ok(())
    })
}

/// Smallest box holding every spreading value above `threshold` times the
/// peak.
///
/// # Safety
/// `op` must be live; `out_box` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_support_box(op: *const OpwOperator, threshold: f64, out_box: *mut OpwBox) -> OpwStatus {
    guard(|| {
        let op = deref(op, "operator")?;
        let out_box = out(out_box, "out_box")?;
        *out_box = match operator::support_box(&op.0, threshold)? {
            Some(SupportBox { t_min, t_max, v_min, v_max }) => OpwBox { t_min, t_max, v_min, v_max, empty: 0 },
            None => OpwBox { empty: 1, ..OpwBox::default() },
        };
        Ok(())
    })
}

/// # Safety
/// `op` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn opw_operator_free(op: *mut OpwOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Parameters shared by the two constructions. `lambda <= 0` selects the
/// default schedule; `fixed_b` / `fixed_delta <= 0` let the pipeline choose.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpwTheoremParams {
    /// Frequency half-width for the box input, time half-width for the sinc
    /// input.
    pub alpha: f64,
    /// `gamma` (box input) or `beta` (sinc input).
    pub width: f64,
    /// Absolute error target.
    pub epsilon: f64,
    /// Share of `epsilon^2` given to the tail, in `(0, 1)`.
    pub c: f64,
    pub extent_factor: f64,
    pub oversample: usize,
    pub lambda: f64,
    pub fixed_b: f64,
    pub fixed_delta: f64,
}

/// Defaults: `c = 0.5`, extent 3, oversample 8, default schedules.
#[no_mangle]
pub extern "C" fn opw_theorem_params_default(alpha: f64, width: f64, epsilon: f64) -> OpwTheoremParams {
    OpwTheoremParams {
        alpha,
        width,
        epsilon,
        c: 0.5,
        extent_factor: 3.0,
        oversample: 8,
        lambda: 0.0,
        fixed_b: 0.0,
        fixed_delta: 0.0,
    }
}

fn setup_from(p: &OpwTheoremParams) -> opwlab::Result<TheoremSetup> {
    let mut synthesis = SynthesisConfig::new(p.alpha, 1.0);
    synthesis.extent_factor = p.extent_factor;
    synthesis.oversample = p.oversample;
    let mut setup = TheoremSetup::new(p.alpha, p.width, BudgetSplit::new(p.epsilon, p.c)?, synthesis);
    if p.lambda > 0.0 {
        setup.lambda_schedule = vec![p.lambda];
    }
    setup.fixed_b = (p.fixed_b > 0.0).then_some(p.fixed_b);
    setup.fixed_delta = (p.fixed_delta > 0.0).then_some(p.fixed_delta);
    Ok(setup)
}

unsafe fn build(
    theorem: fn(&SampledSignal, &TheoremSetup) -> opwlab::Result<pipeline::Construction>,
    y: *const OpwSignal,
    params: *const OpwTheoremParams,
    out_op: *mut *mut OpwOperator,
    out_report: *mut *mut c_char,
) -> OpwStatus {
    guard(|| {
        let y = deref(y, "target")?;
        let params = deref(params, "params")?;
        let out_op = out(out_op, "out_op")?;
        let out_report = out(out_report, "out_report")?;
        let c = theorem(&y.0, &setup_from(params)?)?;
        *out_report = json_string(serde_json::to_string(&c.report))?;
        *out_op = boxed(OpwOperator(c.op));
        Ok(())
    })
}

/// Box-input construction: an operator with `H chi_[-B, B] ~ y`. A run that
/// misses its budget still returns `Ok`; check `converged` in the report.
///
/// # Safety
/// `y` and `params` must be live; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_build_box_input(
    y: *const OpwSignal,
    params: *const OpwTheoremParams,
    out_op: *mut *mut OpwOperator,
    out_report: *mut *mut c_char,
) -> OpwStatus {
    build(pipeline::build_theorem1, y, params, out_op, out_report)
}

/// Sinc-input construction: an operator with `H phi_B ~ y`.
///
/// # Safety
/// As for [`opw_build_box_input`].
#[no_mangle]
pub unsafe extern "C" fn opw_build_sinc_input(
    y: *const OpwSignal,
    params: *const OpwTheoremParams,
    out_op: *mut *mut OpwOperator,
    out_report: *mut *mut c_char,
) -> OpwStatus {
    build(pipeline::build_theorem2, y, params, out_op, out_report)
}

/// Seeded obstruction check on the grid `x0 + j dx`; writes the report as
/// JSON.
///
/// # Safety
/// `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opw_obstruction(
    alpha: f64,
    shift: f64,
    x0: f64,
    dx: f64,
    n: usize,
    seed: u64,
    out_report: *mut *mut c_char,
) -> OpwStatus {
    guard(|| {
        let out_report = out(out_report, "out_report")?;
        let grid = Grid1D::new(x0, dx, n)?;
        let r = pipeline::verify_obstruction(alpha, shift, &grid, seed, &[])?;
        *out_report = json_string(serde_json::to_string(&r))?;
        Ok(())
    })
}
