//! C ABI over the `brlsvrg` library.
//!
//! Objects cross the boundary as opaque handles created by `br_*_new`-style
//! functions and released with the matching `br_*_free`. Every fallible call
//! returns a [`BrStatus`]; on failure a human-readable message is available
//! from [`br_last_error_message`] on the same thread. Panics never unwind
//! into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use brlsvrg::aggregation::{aggregate, AggregatorSpec};
use brlsvrg::analysis::{complexity_bounds, solve_reference, ComplexityInputs, ComplexityMethod, ReferenceSolution};
use brlsvrg::data_io::{self, synthetic, Dataset, ParseOptions};
use brlsvrg::engine::{run, RunConfig, RunStatus, RunTrace};
use brlsvrg::objective::{FiniteSum, Objective};
use brlsvrg::Error;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    NumericalError = 5,
    NotConverged = 6,
    ConfigError = 7,
    DomainError = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Complexity formulas selectable through [`br_complexity_bounds`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrComplexityMethod {
    BrLsvrg = 0,
    ByrdSaga = 1,
    ByzVrMarina = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrComplexityInputs {
    pub l: f64,
    pub mu: f64,
    pub m: f64,
    pub n: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub eps: f64,
}

/// One evaluation point of a run trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrTraceRecord {
    pub k: u64,
    pub subopt: f64,
    pub dist2: f64,
    pub sigma_k2: f64,
    pub psi_k: f64,
    pub oracle_calls: u64,
    pub elapsed_s: f64,
}

/// Opaque dataset handle.
pub struct BrDataset {
    inner: Dataset,
}

/// Opaque regularized logistic-regression objective.
pub struct BrObjective {
    inner: Objective,
}

/// Opaque result of [`br_run`].
pub struct BrTrace {
    inner: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> BrStatus {
    match err {
        Error::Parse { .. } => BrStatus::ParseError,
        Error::InvalidArgument(_) => BrStatus::InvalidArgument,
        Error::Numerical { .. } => BrStatus::NumericalError,
        Error::SolverNotConverged { .. } => BrStatus::NotConverged,
        Error::Config { .. } | Error::Json(_) => BrStatus::ConfigError,
        Error::Domain(_) => BrStatus::DomainError,
        Error::Io { .. } => BrStatus::IoError,
    }
}

struct Fail(BrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BrStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_error(format!("internal panic: {msg}"));
            BrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BrStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got < want {
        return Err(Fail(
            BrStatus::BufferTooSmall,
            format!("`{what}` holds {got} values but {want} are needed"),
        ));
    }
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length plus one,
/// or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn br_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn br_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses LIBSVM text. `dim == 0` infers the dimension from the data.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_parse_libsvm(
    text: *const c_char,
    dim: usize,
    out: *mut *mut BrDataset,
) -> BrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let opts = ParseOptions {
            dim: (dim > 0).then_some(dim),
            ..Default::default()
        };
        let ds = data_io::parse_libsvm(text, &opts)?;
        put(out, BrDataset { inner: ds })
    })
}

/// Loads a LIBSVM file (`.gz` is decompressed). `dim == 0` infers the dimension.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_load(path: *const c_char, dim: usize, out: *mut *mut BrDataset) -> BrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let opts = ParseOptions {
            dim: (dim > 0).then_some(dim),
            ..Default::default()
        };
        let ds = data_io::load_libsvm(path, &opts)?;
        put(out, BrDataset { inner: ds })
    })
}

/// Synthetic one-hot dataset shaped like LIBSVM `mushrooms`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_synthetic(rows: usize, seed: u64, out: *mut *mut BrDataset) -> BrStatus {
    guard(|| {
        let ds = synthetic::mushrooms_like(rows, seed)?;
        put(out, BrDataset { inner: ds })
    })
}

/// Seeded subset of `count` rows without replacement, keeping the dimension.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_subsample(
    ds: *const BrDataset,
    count: usize,
    seed: u64,
    out: *mut *mut BrDataset,
) -> BrStatus {
    guard(|| {
        let ds = handle(ds, "ds")?;
        let sub = data_io::subsample(&ds.inner, count, seed)?;
        put(out, BrDataset { inner: sub })
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_len(ds: *const BrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_dim(ds: *const BrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dim())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_free(ds: *mut BrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Logistic objective over a copy of `ds`. `l2 <= 0` selects the default
/// weight `L0/1000`.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_objective_new(ds: *const BrDataset, l2: f64, out: *mut *mut BrObjective) -> BrStatus {
    guard(|| {
        let ds = handle(ds, "ds")?.inner.clone();
        let obj = if l2 > 0.0 {
            Objective::new(ds, l2)?
        } else {
            Objective::with_default_l2(ds)?
        };
        put(out, BrObjective { inner: obj })
    })
}

/// Writes `L`, `μ` and the ℓ2 weight; any output pointer may be null.
///
/// # Safety
/// `obj` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_objective_constants(
    obj: *const BrObjective,
    lipschitz: *mut f64,
    mu: *mut f64,
    l2: *mut f64,
) -> BrStatus {
    guard(|| {
        let obj = &handle(obj, "obj")?.inner;
        if let Some(p) = lipschitz.as_mut() {
            *p = obj.smoothness();
        }
        if let Some(p) = mu.as_mut() {
            *p = obj.strong_convexity();
        }
        if let Some(p) = l2.as_mut() {
            *p = obj.l2();
        }
        Ok(())
    })
}

/// # Safety
/// `obj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn br_objective_dim(obj: *const BrObjective) -> usize {
    obj.as_ref().map_or(0, |o| o.inner.dim())
}

/// `f(x)`.
///
/// # Safety
/// `x` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_objective_loss(
    obj: *const BrObjective,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> BrStatus {
    guard(|| {
        let obj = &handle(obj, "obj")?.inner;
        let x = slice_arg(x, len, "x")?;
        let v = obj.loss(x)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// `∇f(x)` written into `grad` (`len` values, equal to the dimension).
///
/// # Safety
/// `x` must point to `len` values and `grad` to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn br_objective_grad(
    obj: *const BrObjective,
    x: *const f64,
    len: usize,
    grad: *mut f64,
) -> BrStatus {
    guard(|| {
        let obj = &handle(obj, "obj")?.inner;
        let x = slice_arg(x, len, "x")?;
        let g = obj.full_grad(x)?;
        out_slice(grad, len, "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

/// # Safety
/// `obj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn br_objective_free(obj: *mut BrObjective) {
    if !obj.is_null() {
        drop(Box::from_raw(obj));
    }
}

/// Solves `min f` to gradient norm `tol`. Writes `x*` (`len` values) and `f*`.
///
/// # Safety
/// `x_star` must point to `len` writable values; `f_star` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_solve_reference(
    obj: *const BrObjective,
    tol: f64,
    max_iter: usize,
    x_star: *mut f64,
    len: usize,
    f_star: *mut f64,
) -> BrStatus {
    guard(|| {
        let obj = &handle(obj, "obj")?.inner;
        check_len(len, obj.dim(), "x_star")?;
        let out = out_slice(x_star, len, "x_star")?;
        let f_out = f_star.as_mut().ok_or_else(|| null("f_star"))?;
        let sol = solve_reference(obj, tol, max_iter)?;
        out[..sol.x_star.len()].copy_from_slice(&sol.x_star);
        *f_out = sol.f_star;
        Ok(())
    })
}

/// Aggregates `count` vectors of length `dim` stored row-major in `vectors`.
/// `spec_json` is an aggregator spec, e.g.
/// `{"base":"geometric-median","bucketing":{"bucket_size":2}}`.
///
/// # Safety
/// `vectors` must hold `count * dim` values and `out` `dim` writable values.
#[no_mangle]
pub unsafe extern "C" fn br_aggregate(
    spec_json: *const c_char,
    vectors: *const f64,
    count: usize,
    dim: usize,
    round_seed: u64,
    out: *mut f64,
) -> BrStatus {
    guard(|| {
        let spec: AggregatorSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?).map_err(Error::from)?;
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| Fail(BrStatus::InvalidArgument, "count * dim overflows".into()))?;
        let flat = slice_arg(vectors, total, "vectors")?;
        let rows: Vec<&[f64]> = if dim == 0 {
            Vec::new()
        } else {
            flat.chunks_exact(dim).collect()
        };
        let agg = aggregate(&spec, &rows, round_seed)?;
        out_slice(out, dim, "out")?.copy_from_slice(&agg);
        Ok(())
    })
}

/// Runs the simulator. `config_json` is a run configuration; `x0` may be null
/// for the zero vector. When `x_star` is non-null the trace reports
/// suboptimality and distances against (`x_star`, `f_star`).
///
/// # Safety
/// Non-null vectors must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_run(
    obj: *const BrObjective,
    config_json: *const c_char,
    x0: *const f64,
    x_star: *const f64,
    f_star: f64,
    len: usize,
    out: *mut *mut BrTrace,
) -> BrStatus {
    guard(|| {
        let obj = &handle(obj, "obj")?.inner;
        let config: RunConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(Error::from)?;
        let start = if x0.is_null() {
            vec![0.0; obj.dim()]
        } else {
            slice_arg(x0, len, "x0")?.to_vec()
        };
        let reference = if x_star.is_null() {
            None
        } else {
            Some(ReferenceSolution {
                x_star: slice_arg(x_star, len, "x_star")?.to_vec(),
                f_star,
                grad_norm: f64::NAN,
                solver_tol: f64::NAN,
                iterations: 0,
            })
        };
        let trace = run(&config, obj, &start, reference.as_ref())?;
        put(out, BrTrace { inner: trace })
    })
}

/// Number of records in the trace, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn br_trace_len(trace: *const BrTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.records.len())
}

/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_trace_record(trace: *const BrTrace, index: usize, out: *mut BrTraceRecord) -> BrStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.inner;
        let r = t.records.get(index).ok_or_else(|| {
            Fail(
                BrStatus::InvalidArgument,
                format!("record {index} out of range ({} records)", t.records.len()),
            )
        })?;
        *out.as_mut().ok_or_else(|| null("out"))? = BrTraceRecord {
            k: r.k as u64,
            subopt: r.subopt,
            dist2: r.dist2,
            sigma_k2: r.sigma_k2,
            psi_k: r.psi_k,
            oracle_calls: r.oracle_calls,
            elapsed_s: r.elapsed_s,
        };
        Ok(())
    })
}

/// Writes the round after which the run diverged, or -1 if it completed.
///
/// # Safety
/// `trace` must be a live handle; `diverged_round` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_trace_status(trace: *const BrTrace, diverged_round: *mut i64) -> BrStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.inner;
        *diverged_round.as_mut().ok_or_else(|| null("diverged_round"))? = match t.status {
            RunStatus::Completed => -1,
            RunStatus::Diverged { round } => round as i64,
        };
        Ok(())
    })
}

/// Copies the last iterate into `out` (`len` values, at least the dimension).
///
/// # Safety
/// `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn br_trace_final_x(trace: *const BrTrace, out: *mut f64, len: usize) -> BrStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.inner;
        check_len(len, t.final_x.len(), "out")?;
        out_slice(out, len, "out")?[..t.final_x.len()].copy_from_slice(&t.final_x);
        Ok(())
    })
}

/// Total component-gradient evaluations by honest workers.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn br_trace_honest_oracle_calls(trace: *const BrTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.inner.honest_oracle_calls)
}

/// Writes the trace as CSV to `path`.
///
/// # Safety
/// `trace` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn br_trace_write_csv(
    trace: *const BrTrace,
    path: *const c_char,
    include_timing: bool,
) -> BrStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.inner;
        let path = str_arg(path, "path")?;
        let file = std::fs::File::create(path).map_err(|e| Fail(BrStatus::IoError, format!("{path}: {e}")))?;
        t.write_csv(std::io::BufWriter::new(file), include_timing)
            .map_err(|e| Fail(BrStatus::IoError, format!("{path}: {e}")))
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn br_trace_free(trace: *mut BrTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Iteration and oracle-call bounds with absolute constants set to 1.
///
/// # Safety
/// `inputs` must be readable; `iterations` and `oracle_calls` writable.
#[no_mangle]
pub unsafe extern "C" fn br_complexity_bounds(
    method: BrComplexityMethod,
    inputs: *const BrComplexityInputs,
    iterations: *mut f64,
    oracle_calls: *mut f64,
) -> BrStatus {
    guard(|| {
        let i = *handle(inputs, "inputs")?;
        let method = match method {
            BrComplexityMethod::BrLsvrg => ComplexityMethod::BrLsvrg,
            BrComplexityMethod::ByrdSaga => ComplexityMethod::ByrdSaga,
            BrComplexityMethod::ByzVrMarina => ComplexityMethod::ByzVrMarina,
        };
        let report = complexity_bounds(
            method,
            ComplexityInputs {
                l: i.l,
                mu: i.mu,
                m: i.m,
                n: i.n,
                b: i.b,
                c: i.c,
                delta: i.delta,
                eps: i.eps,
            },
        )?;
        *iterations.as_mut().ok_or_else(|| null("iterations"))? = report.iterations_bound;
        *oracle_calls.as_mut().ok_or_else(|| null("oracle_calls"))? = report.oracle_bound;
        Ok(())
    })
}
