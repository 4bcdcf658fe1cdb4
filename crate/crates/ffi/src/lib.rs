//! C ABI over the latentprobe core.
//!
//! Every entry point returns an [`LpStatus`]. On failure, a description is
//! kept per thread and can be read with [`lp_last_error_message`]. Objects
//! cross the boundary as opaque handles that must be released with their
//! matching `_free` function. Matrices are dense row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use latentprobe::data::{dump_activations, load_activations, ActivationSet, Split};
use latentprobe::hull::{hull_fraction, HullTester};
use latentprobe::nn::Network;
use latentprobe::stats::{bootstrap_ci, ks_statistic, logistic_fit, nn_distance, Metric};
use latentprobe::Error;
use ndarray::{ArrayView2, ShapeBuilder};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Format = 5,
    Numerical = 6,
    Panic = 7,
}

/// Distance used by [`lp_nn_distance`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpMetric {
    Euclidean = 0,
    Cosine = 1,
    ClassConditional = 2,
}

/// Tapped activations with labels and base-network predictions.
pub struct LpActivations(ActivationSet);

/// Convex hull of a fixed generator set.
pub struct LpHullTester(HullTester);

/// A frozen classifier.
pub struct LpNetwork(Network);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &Error) -> LpStatus {
    match e {
        Error::Dimension { .. } => LpStatus::Dimension,
        Error::Io(_) | Error::Path { .. } => LpStatus::Io,
        Error::Json(_)
        | Error::Csv(_)
        | Error::IdxMagic { .. }
        | Error::Truncated { .. }
        | Error::CountMismatch { .. }
        | Error::NactMagic { .. }
        | Error::NactVersion { .. }
        | Error::NactLength { .. } => LpStatus::Format,
        Error::IterationCap { .. } | Error::NonFinite(_) | Error::NonIdentifiable | Error::Unbracketable { .. } => {
            LpStatus::Numerical
        }
        _ => LpStatus::InvalidArgument,
    }
}

struct Fail(LpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(classify(&e), e.to_string())
    }
}

type Outcome = std::result::Result<(), Fail>;

fn guard(f: impl FnOnce() -> Outcome) -> LpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(LpStatus::InvalidArgument, msg.into())
}

/// Borrows `len` values, allowing a null pointer only when `len` is zero.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> std::result::Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> std::result::Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn matrix<'a>(p: *const f64, rows: usize, cols: usize, what: &str) -> std::result::Result<ArrayView2<'a, f64>, Fail> {
    let n = rows.checked_mul(cols).ok_or_else(|| invalid(format!("{what} is too large")))?;
    let data = slice(p, n, what)?;
    Ok(ArrayView2::from_shape((rows, cols).strides((cols, 1)), data).expect("length checked"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> std::result::Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> std::result::Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path(p: *const c_char) -> std::result::Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn widen(v: &[u32]) -> Vec<usize> {
    v.iter().map(|&l| l as usize).collect()
}

fn flags(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&b| b != 0).collect()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an activation set from a `rows x cols` matrix, per-row labels and
/// base predictions. `split` is 0 for train and 1 for test.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out_handle` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u32,
    predictions: *const u32,
    n_classes: usize,
    split: u8,
    out_handle: *mut *mut LpActivations,
) -> LpStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let acts = matrix(data, rows, cols, "data")?.to_owned();
        let y = widen(slice(labels, rows, "labels")?);
        let p = widen(slice(predictions, rows, "predictions")?);
        let split = match split {
            0 => Split::Train,
            1 => Split::Test,
            s => return Err(invalid(format!("split must be 0 or 1, got {s}"))),
        };
        let set = ActivationSet::new(acts, y, p, n_classes, split, "ffi")?;
        *out_handle = Box::into_raw(Box::new(LpActivations(set)));
        Ok(())
    })
}

/// Reads an activation dump.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out_handle` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_load(file: *const c_char, out_handle: *mut *mut LpActivations) -> LpStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let set = load_activations(path(file)?)?;
        *out_handle = Box::into_raw(Box::new(LpActivations(set)));
        Ok(())
    })
}

/// Writes an activation dump.
///
/// # Safety
/// `set` must come from this library; `file` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_save(set: *const LpActivations, file: *const c_char) -> LpStatus {
    guard(|| {
        let set = handle(set, "activations")?;
        dump_activations(&set.0, path(file)?)?;
        Ok(())
    })
}

/// # Safety
/// `set` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_free(set: *mut LpActivations) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Row count, column count and base accuracy. Any output may be null.
///
/// # Safety
/// `set` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_shape(
    set: *const LpActivations,
    rows: *mut usize,
    cols: *mut usize,
    base_accuracy: *mut f64,
) -> LpStatus {
    guard(|| {
        let s = &handle(set, "activations")?.0;
        if let Some(r) = rows.as_mut() {
            *r = s.len();
        }
        if let Some(c) = cols.as_mut() {
            *c = s.dim();
        }
        if let Some(a) = base_accuracy.as_mut() {
            *a = s.base_accuracy;
        }
        Ok(())
    })
}

/// Copies the activation matrix (row-major) into `buffer` of `len` doubles.
///
/// # Safety
/// `buffer` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_copy(set: *const LpActivations, buffer: *mut f64, len: usize) -> LpStatus {
    guard(|| {
        let s = &handle(set, "activations")?.0;
        if len != s.activations.len() {
            return Err(Fail(
                LpStatus::Dimension,
                format!("buffer holds {len} values, activations have {}", s.activations.len()),
            ));
        }
        let dst = slice_mut(buffer, len, "buffer")?;
        for (d, v) in dst.iter_mut().zip(s.activations.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Copies labels and base predictions; either output may be null.
///
/// # Safety
/// Non-null buffers must hold one entry per row.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_labels(
    set: *const LpActivations,
    labels_out: *mut u32,
    predictions_out: *mut u32,
) -> LpStatus {
    guard(|| {
        let s = &handle(set, "activations")?.0;
        for (src, dst) in [(&s.labels, labels_out), (&s.base_predictions, predictions_out)] {
            if !dst.is_null() {
                let d = slice_mut(dst, s.len(), "labels")?;
                for (d, &v) in d.iter_mut().zip(src.iter()) {
                    *d = v as u32;
                }
            }
        }
        Ok(())
    })
}

/// Prepares hull tests against `rows x cols` generators.
///
/// # Safety
/// `generators` must hold `rows * cols` doubles; `out_handle` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn lp_hull_tester_new(
    generators: *const f64,
    rows: usize,
    cols: usize,
    tolerance: f64,
    out_handle: *mut *mut LpHullTester,
) -> LpStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let t = HullTester::new(matrix(generators, rows, cols, "generators")?, tolerance)?;
        *out_handle = Box::into_raw(Box::new(LpHullTester(t)));
        Ok(())
    })
}

/// Tests one query of `dim` coordinates. `inside` gets 1 or 0; `residual`
/// may be null.
///
/// # Safety
/// `tester` must come from this library; `query` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_hull_tester_contains(
    tester: *const LpHullTester,
    query: *const f64,
    dim: usize,
    inside: *mut u8,
    residual: *mut f64,
) -> LpStatus {
    guard(|| {
        let t = handle(tester, "hull tester")?;
        let inside = out(inside, "inside")?;
        let q = slice(query, dim, "query")?;
        let cert = t.0.contains(q)?;
        *inside = u8::from(cert.inside);
        if let Some(r) = residual.as_mut() {
            *r = cert.residual;
        }
        Ok(())
    })
}

/// # Safety
/// `tester` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lp_hull_tester_free(tester: *mut LpHullTester) {
    if !tester.is_null() {
        drop(Box::from_raw(tester));
    }
}

/// Fraction of `n_queries` points inside the hull of `n_generators` points,
/// all of dimension `dim`. `inside_out` (optional) gets one flag per query.
///
/// # Safety
/// Pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn lp_hull_fraction(
    queries: *const f64,
    n_queries: usize,
    generators: *const f64,
    n_generators: usize,
    dim: usize,
    tolerance: f64,
    fraction: *mut f64,
    inside_out: *mut u8,
) -> LpStatus {
    guard(|| {
        let fraction = out(fraction, "fraction")?;
        let q = matrix(queries, n_queries, dim, "queries")?;
        let g = matrix(generators, n_generators, dim, "generators")?;
        let f = hull_fraction(q, g, tolerance)?;
        *fraction = f.fraction;
        if !inside_out.is_null() {
            let dst = slice_mut(inside_out, n_queries, "inside")?;
            for (d, r) in dst.iter_mut().zip(&f.records) {
                *d = u8::from(r.inside);
            }
        }
        Ok(())
    })
}

/// Distance from each query to its nearest reference. Labels are needed
/// only for the class-conditional metric and may be null otherwise.
///
/// # Safety
/// Pointers must be valid for the stated sizes; `distances` holds `n_queries` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lp_nn_distance(
    queries: *const f64,
    n_queries: usize,
    references: *const f64,
    n_references: usize,
    dim: usize,
    metric: LpMetric,
    reference_labels: *const u32,
    query_labels: *const u32,
    distances: *mut f64,
) -> LpStatus {
    guard(|| {
        let q = matrix(queries, n_queries, dim, "queries")?;
        let r = matrix(references, n_references, dim, "references")?;
        let dst = slice_mut(distances, n_queries, "distances")?;
        let metric = match metric {
            LpMetric::Euclidean => Metric::Euclidean,
            LpMetric::Cosine => Metric::Cosine,
            LpMetric::ClassConditional => Metric::ClassConditional,
        };
        let rl = (!reference_labels.is_null())
            .then(|| slice(reference_labels, n_references, "reference labels").map(widen))
            .transpose()?;
        let ql = (!query_labels.is_null())
            .then(|| slice(query_labels, n_queries, "query labels").map(widen))
            .transpose()?;
        let d = nn_distance(q, r, metric, rl.as_deref(), ql.as_deref())?;
        dst.copy_from_slice(&d);
        Ok(())
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
///
/// # Safety
/// `a` and `b` must hold `n_a` and `n_b` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_ks_statistic(a: *const f64, n_a: usize, b: *const f64, n_b: usize, statistic: *mut f64) -> LpStatus {
    guard(|| {
        let statistic = out(statistic, "statistic")?;
        *statistic = ks_statistic(slice(a, n_a, "a")?, slice(b, n_b, "b")?)?.statistic;
        Ok(())
    })
}

/// Percentile bootstrap interval for the mean.
///
/// # Safety
/// `values` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_bootstrap_ci(
    values: *const f64,
    n: usize,
    resamples: usize,
    level: f64,
    seed: u64,
    low: *mut f64,
    high: *mut f64,
) -> LpStatus {
    guard(|| {
        let (low, high) = (out(low, "low")?, out(high, "high")?);
        let ci = bootstrap_ci(slice(values, n, "values")?, resamples, level, seed)?;
        *low = ci.low;
        *high = ci.high;
        Ok(())
    })
}

/// Logistic regression of correctness on z-scored distance, hull
/// membership and their interaction. Each output holds four values in the
/// order intercept, distance, in_hull, interaction; any may be null.
///
/// # Safety
/// Inputs must hold `n` entries; non-null outputs must hold 4 doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lp_logistic_fit(
    distance: *const f64,
    in_hull: *const u8,
    correct: *const u8,
    n: usize,
    coefficients: *mut f64,
    standard_errors: *mut f64,
    z_values: *mut f64,
) -> LpStatus {
    guard(|| {
        let fit = logistic_fit(
            slice(distance, n, "distance")?,
            &flags(slice(in_hull, n, "in_hull")?),
            &flags(slice(correct, n, "correct")?),
        )?;
        for (src, dst) in [
            (fit.coefficients, coefficients),
            (fit.standard_errors, standard_errors),
            (fit.z_values, z_values),
        ] {
            if !dst.is_null() {
                slice_mut(dst, 4, "output")?.copy_from_slice(&src);
            }
        }
        Ok(())
    })
}

/// Loads a classifier saved as JSON and freezes it.
///
/// # Safety
/// `file` must be NUL-terminated; `out_handle` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn lp_network_load(file: *const c_char, out_handle: *mut *mut LpNetwork) -> LpStatus {
    guard(|| {
        let out_handle = out(out_handle, "out")?;
        let p = path(file)?;
        let text = std::fs::read_to_string(&p).map_err(|e| Fail(LpStatus::Io, format!("{}: {e}", p.display())))?;
        let mut net: Network = serde_json::from_str(&text).map_err(Error::from)?;
        net.freeze();
        *out_handle = Box::into_raw(Box::new(LpNetwork(net)));
        Ok(())
    })
}

/// Input width and tap-layer width; either output may be null.
///
/// # Safety
/// `net` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn lp_network_dims(net: *const LpNetwork, input_dim: *mut usize, tap_width: *mut usize) -> LpStatus {
    guard(|| {
        let n = &handle(net, "network")?.0;
        if let Some(d) = input_dim.as_mut() {
            *d = n.input_dim();
        }
        if let Some(w) = tap_width.as_mut() {
            *w = n.tap_width();
        }
        Ok(())
    })
}

/// Tap-layer activations of `rows` inputs; `output` holds `rows * tap_width` doubles.
///
/// # Safety
/// `inputs` must hold `rows * input_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_network_tap(
    net: *const LpNetwork,
    inputs: *const f64,
    rows: usize,
    output: *mut f64,
    output_len: usize,
) -> LpStatus {
    guard(|| {
        let n = &handle(net, "network")?.0;
        let x = matrix(inputs, rows, n.input_dim(), "inputs")?;
        let acts = n.tap_activations(x)?;
        if output_len != acts.len() {
            return Err(Fail(
                LpStatus::Dimension,
                format!("output holds {output_len} values, tap produces {}", acts.len()),
            ));
        }
        let dst = slice_mut(output, output_len, "output")?;
        for (d, v) in dst.iter_mut().zip(acts.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `net` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lp_network_free(net: *mut LpNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}
