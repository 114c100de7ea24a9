//! C ABI for the unfold-kit library.
//!
//! Conventions:
//! - Every fallible function returns a [`UkStatus`]; `UK_STATUS_OK` (0)
//!   means success. On failure, [`uk_last_error_message`] returns a
//!   thread-local, NUL-terminated description of the most recent error.
//! - Objects are exchanged as opaque handles created by `uk_*` constructors
//!   and released by the matching `uk_*_free` function. Handles are not
//!   thread-safe; share them across threads only with external
//!   synchronization.
//! - Configuration is passed as JSON text using the same schemas as the
//!   library and CLI (all keys optional, unknown keys rejected).
//! - Event arrays are row-major `f64` buffers; presence masks are one byte
//!   per event (0 = side absent).
//! - All entry points catch panics and report them as `UK_STATUS_PANIC`
//!   instead of unwinding across the ABI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use unfold_kit::binned::{estimate_response, ibu, ResponseMatrix};
use unfold_kit::dataset::{
    generate_gaussian_1d, generate_gaussian_multidim, EventSet, PairedEvent, ToyConfig, ToyDataset,
};
use unfold_kit::error::Error;
use unfold_kit::omnifold::{self, UnfoldConfig, UnfoldResult};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UkStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Invalid configuration (bad JSON, unknown keys, out-of-range values).
    Config = 3,
    /// Malformed input data.
    Parse = 4,
    /// Mismatched array lengths or feature dimensions.
    Dimension = 5,
    /// An operation received an empty sample it cannot work with.
    EmptyInput = 6,
    /// Classifier training failed.
    Training = 7,
    /// Numerical failure inside an algorithm.
    Algorithm = 8,
    /// File input/output failure.
    Io = 9,
    /// Serialization failure.
    Serialization = 10,
    /// An internal panic was caught at the ABI boundary.
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NUL bytes removed");
    });
}

fn status_of(e: &Error) -> UkStatus {
    match e.kind() {
        "config" => UkStatus::Config,
        "parse" => UkStatus::Parse,
        "dimension_mismatch" => UkStatus::Dimension,
        "empty_input" => UkStatus::EmptyInput,
        "training" => UkStatus::Training,
        "algorithm" => UkStatus::Algorithm,
        "io" => UkStatus::Io,
        "serialization" => UkStatus::Serialization,
        _ => UkStatus::Algorithm,
    }
}

fn fail(e: &Error) -> UkStatus {
    set_error(&e.to_string());
    status_of(e)
}

/// Run a closure behind the panic guard, translating failures into status
/// codes and recording their message.
fn guarded(f: impl FnOnce() -> Result<UkStatus, Error>) -> UkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => fail(&e),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            set_error(&format!("internal panic: {message}"));
            UkStatus::Panic
        }
    }
}

macro_rules! require_non_null {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("null pointer argument: ", stringify!($ptr)));
            return UkStatus::NullPointer;
        }
    };
}

unsafe fn parse_json_arg<T: serde::de::DeserializeOwned>(
    text: *const c_char,
    what: &str,
) -> Result<T, Error> {
    let raw = CStr::from_ptr(text);
    let s = raw
        .to_str()
        .map_err(|_| Error::Config(format!("{what} is not valid UTF-8")))?;
    serde_json::from_str(s).map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Library version as a static NUL-terminated string; never null, never
/// freed by the caller.
#[no_mangle]
pub extern "C" fn uk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Description of the most recent error on this thread, as a
/// NUL-terminated string. The pointer stays valid until the next failing
/// call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn uk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by an `uk_*_json` accessor. Null is ignored.
///
/// # Safety
/// `s` must be a pointer previously returned by this library's string
/// accessors, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Toy dataset handle
// ---------------------------------------------------------------------------

/// Opaque handle to a generated toy dataset.
pub struct UkToyDataset {
    inner: ToyDataset,
}

/// Generate a toy dataset from a JSON configuration (same schema as the
/// library's toy block; `"{}"` gives the 1-D defaults). Datasets with
/// auxiliary smearings use the multidimensional generator and observe every
/// recorded draw.
///
/// # Safety
/// `config_json` must point to a NUL-terminated string and `out` to a
/// writable pointer slot. On success `*out` owns the dataset and must be
/// released with [`uk_toy_free`].
#[no_mangle]
pub unsafe extern "C" fn uk_toy_generate(
    config_json: *const c_char,
    out: *mut *mut UkToyDataset,
) -> UkStatus {
    require_non_null!(config_json);
    require_non_null!(out);
    guarded(|| {
        let cfg: ToyConfig = parse_json_arg(config_json, "toy configuration")?;
        cfg.validate()?;
        let dataset = if cfg.n_aux_smearings == 0 {
            generate_gaussian_1d(&cfg)?
        } else {
            generate_gaussian_multidim(&cfg, cfg.n_aux_smearings)?
        };
        *out = Box::into_raw(Box::new(UkToyDataset { inner: dataset }));
        Ok(UkStatus::Ok)
    })
}

/// Release a toy dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be a pointer from [`uk_toy_generate`], not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uk_toy_free(ds: *mut UkToyDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Sample sizes of a toy dataset: measured events, background-model
/// events, synthetic pairs, and truth reference events. Null count slots
/// are skipped.
///
/// # Safety
/// `ds` must be a live handle from [`uk_toy_generate`]; non-null count
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn uk_toy_counts(
    ds: *const UkToyDataset,
    n_data: *mut usize,
    n_noise: *mut usize,
    n_pairs: *mut usize,
    n_truth: *mut usize,
) -> UkStatus {
    require_non_null!(ds);
    let inner = &(*ds).inner;
    if !n_data.is_null() {
        *n_data = inner.data.n_events();
    }
    if !n_noise.is_null() {
        *n_noise = inner.noise_mc.n_events();
    }
    if !n_pairs.is_null() {
        *n_pairs = inner.synthetic.len();
    }
    if !n_truth.is_null() {
        *n_truth = inner.truth_holdout.n_events();
    }
    UkStatus::Ok
}

// ---------------------------------------------------------------------------
// Unfolding
// ---------------------------------------------------------------------------

/// Opaque handle to an unfolding result.
pub struct UkUnfoldResult {
    inner: UnfoldResult,
    n_pairs: usize,
}

/// Unfold a toy dataset with its own measured, background, and synthetic
/// samples. `config_json` uses the unfolding schema (`"{}"` for defaults).
///
/// # Safety
/// `ds` must be a live handle from [`uk_toy_generate`], `config_json` a
/// NUL-terminated string, `out` a writable slot. On success `*out` must be
/// released with [`uk_unfold_free`].
#[no_mangle]
pub unsafe extern "C" fn uk_toy_unfold(
    ds: *const UkToyDataset,
    config_json: *const c_char,
    out: *mut *mut UkUnfoldResult,
) -> UkStatus {
    require_non_null!(ds);
    require_non_null!(config_json);
    require_non_null!(out);
    guarded(|| {
        let cfg: UnfoldConfig = parse_json_arg(config_json, "unfolding configuration")?;
        let dataset = &(*ds).inner;
        let noise = (!dataset.noise_mc.is_empty()).then_some(&dataset.noise_mc);
        let result = omnifold::run(&dataset.data, noise, &dataset.synthetic, &cfg)?;
        *out = Box::into_raw(Box::new(UkUnfoldResult {
            n_pairs: dataset.synthetic.len(),
            inner: result,
        }));
        Ok(UkStatus::Ok)
    })
}

/// Unfold caller-provided events.
///
/// Layouts: `data` is `n_data x data_dim` row-major with optional per-event
/// `data_weights` (null = unit weights); `noise` is `n_noise x data_dim`
/// (null only when `n_noise` is 0). The synthetic sample consists of
/// `n_pairs` paired events: `gen` is `n_pairs x gen_dim` row-major, valid
/// where `gen_present[i]` is non-zero; `sim` is `n_pairs x sim_dim`, valid
/// where `sim_present[i]` is non-zero; `pair_weights` is optional (null =
/// unit weights). `sim_dim` must equal `data_dim`.
///
/// # Safety
/// All non-null pointers must reference readable buffers of the stated
/// lengths; `config_json` must be NUL-terminated; `out` must be writable.
/// On success `*out` must be released with [`uk_unfold_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn uk_unfold(
    config_json: *const c_char,
    data: *const f64,
    data_weights: *const f64,
    n_data: usize,
    data_dim: usize,
    noise: *const f64,
    n_noise: usize,
    gen: *const f64,
    gen_present: *const u8,
    gen_dim: usize,
    sim: *const f64,
    sim_present: *const u8,
    sim_dim: usize,
    pair_weights: *const f64,
    n_pairs: usize,
    out: *mut *mut UkUnfoldResult,
) -> UkStatus {
    require_non_null!(config_json);
    require_non_null!(data);
    require_non_null!(gen);
    require_non_null!(gen_present);
    require_non_null!(sim);
    require_non_null!(sim_present);
    require_non_null!(out);
    if n_noise > 0 && noise.is_null() {
        set_error("null pointer argument: noise (n_noise > 0)");
        return UkStatus::NullPointer;
    }
    guarded(|| {
        let cfg: UnfoldConfig = parse_json_arg(config_json, "unfolding configuration")?;

        let data_set = event_set_from_raw(data, data_weights, n_data, data_dim)?;
        let noise_set = if n_noise > 0 {
            Some(event_set_from_raw(noise, std::ptr::null(), n_noise, data_dim)?)
        } else {
            None
        };

        let gen_rows = std::slice::from_raw_parts(gen, n_pairs * gen_dim);
        let gen_mask = std::slice::from_raw_parts(gen_present, n_pairs);
        let sim_rows = std::slice::from_raw_parts(sim, n_pairs * sim_dim);
        let sim_mask = std::slice::from_raw_parts(sim_present, n_pairs);
        let weights: Box<dyn Fn(usize) -> f64> = if pair_weights.is_null() {
            Box::new(|_| 1.0)
        } else {
            let w = std::slice::from_raw_parts(pair_weights, n_pairs);
            Box::new(move |i| w[i])
        };
        let mut pairs = Vec::with_capacity(n_pairs);
        for i in 0..n_pairs {
            pairs.push(PairedEvent {
                gen: (gen_mask[i] != 0)
                    .then(|| gen_rows[i * gen_dim..(i + 1) * gen_dim].to_vec()),
                sim: (sim_mask[i] != 0)
                    .then(|| sim_rows[i * sim_dim..(i + 1) * sim_dim].to_vec()),
                weight: weights(i),
            });
        }

        let result = omnifold::run(&data_set, noise_set.as_ref(), &pairs, &cfg)?;
        *out = Box::into_raw(Box::new(UkUnfoldResult { n_pairs, inner: result }));
        Ok(UkStatus::Ok)
    })
}

unsafe fn event_set_from_raw(
    features: *const f64,
    weights: *const f64,
    n: usize,
    dim: usize,
) -> Result<EventSet, Error> {
    if dim == 0 {
        return Err(Error::DimensionMismatch(
            "feature dimension must be at least 1".into(),
        ));
    }
    let rows = std::slice::from_raw_parts(features, n * dim);
    let row_vecs: Vec<Vec<f64>> = (0..n).map(|i| rows[i * dim..(i + 1) * dim].to_vec()).collect();
    let weight_vec = if weights.is_null() {
        vec![1.0; n]
    } else {
        std::slice::from_raw_parts(weights, n).to_vec()
    };
    EventSet::from_rows(dim, &row_vecs, &weight_vec)
}

/// Release an unfolding result. Null is ignored.
///
/// # Safety
/// `res` must come from an unfolding constructor, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uk_unfold_free(res: *mut UkUnfoldResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of synthetic pairs the result carries weights for; 0 on null.
///
/// # Safety
/// `res` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn uk_unfold_n_pairs(res: *const UkUnfoldResult) -> usize {
    if res.is_null() {
        0
    } else {
        (*res).n_pairs
    }
}

/// Number of iterations the unfolding ran; 0 on null.
///
/// # Safety
/// `res` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn uk_unfold_n_iterations(res: *const UkUnfoldResult) -> usize {
    if res.is_null() {
        0
    } else {
        (*res).inner.states.len()
    }
}

/// Copy the synthetic-sample weights after `iteration` (1-based) into
/// `buf`, one weight per pair. `len` must equal the pair count.
///
/// # Safety
/// `res` must be a live result handle; `buf` must be writable for `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn uk_unfold_weights(
    res: *const UkUnfoldResult,
    iteration: usize,
    buf: *mut f64,
    len: usize,
) -> UkStatus {
    require_non_null!(res);
    require_non_null!(buf);
    let result = &(*res).inner;
    if iteration == 0 || iteration > result.states.len() {
        set_error(&format!(
            "iteration {iteration} outside 1..={}",
            result.states.len()
        ));
        return UkStatus::Dimension;
    }
    let weights = &result.states[iteration - 1].w_push;
    if len != weights.len() {
        set_error(&format!("buffer holds {len} entries, need {}", weights.len()));
        return UkStatus::Dimension;
    }
    std::ptr::copy_nonoverlapping(weights.as_ptr(), buf, weights.len());
    UkStatus::Ok
}

/// Copy the background-subtraction weights of the measured events into
/// `buf`. `len` must equal the measured-event count.
///
/// # Safety
/// `res` must be a live result handle; `buf` must be writable for `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn uk_unfold_data_weights(
    res: *const UkUnfoldResult,
    buf: *mut f64,
    len: usize,
) -> UkStatus {
    require_non_null!(res);
    require_non_null!(buf);
    let weights = &(*res).inner.data_weights;
    if len != weights.len() {
        set_error(&format!("buffer holds {len} entries, need {}", weights.len()));
        return UkStatus::Dimension;
    }
    std::ptr::copy_nonoverlapping(weights.as_ptr(), buf, weights.len());
    UkStatus::Ok
}

/// The run diagnostics as a JSON string; release with [`uk_string_free`].
/// Returns null on failure.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn uk_unfold_diagnostics_json(res: *const UkUnfoldResult) -> *mut c_char {
    if res.is_null() {
        set_error("null pointer argument: res");
        return std::ptr::null_mut();
    }
    match serde_json::to_string(&(*res).inner.diagnostics) {
        Ok(json) => match CString::new(json) {
            Ok(c) => c.into_raw(),
            Err(_) => {
                set_error("diagnostics JSON contained a NUL byte");
                std::ptr::null_mut()
            }
        },
        Err(e) => {
            set_error(&format!("diagnostics serialization: {e}"));
            std::ptr::null_mut()
        }
    }
}

// ---------------------------------------------------------------------------
// Binned baseline
// ---------------------------------------------------------------------------

/// Opaque handle to an estimated detector-response matrix.
pub struct UkResponse {
    inner: ResponseMatrix,
}

/// Estimate a one-dimensional response matrix from paired events. `gen`
/// and `sim` hold one value per pair, valid where the matching presence
/// mask is non-zero; `weights` is optional (null = unit). Edges must be
/// strictly increasing arrays of `n_gen_edges` / `n_sim_edges` values.
///
/// # Safety
/// All non-null pointers must reference readable buffers of the stated
/// lengths; `out` must be writable. On success `*out` must be released
/// with [`uk_response_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn uk_response_estimate(
    gen: *const f64,
    gen_present: *const u8,
    sim: *const f64,
    sim_present: *const u8,
    weights: *const f64,
    n_pairs: usize,
    gen_edges: *const f64,
    n_gen_edges: usize,
    sim_edges: *const f64,
    n_sim_edges: usize,
    out: *mut *mut UkResponse,
) -> UkStatus {
    require_non_null!(gen);
    require_non_null!(gen_present);
    require_non_null!(sim);
    require_non_null!(sim_present);
    require_non_null!(gen_edges);
    require_non_null!(sim_edges);
    require_non_null!(out);
    guarded(|| {
        let gen_vals = std::slice::from_raw_parts(gen, n_pairs);
        let gen_mask = std::slice::from_raw_parts(gen_present, n_pairs);
        let sim_vals = std::slice::from_raw_parts(sim, n_pairs);
        let sim_mask = std::slice::from_raw_parts(sim_present, n_pairs);
        let w: Box<dyn Fn(usize) -> f64> = if weights.is_null() {
            Box::new(|_| 1.0)
        } else {
            let w = std::slice::from_raw_parts(weights, n_pairs);
            Box::new(move |i| w[i])
        };
        let pairs: Vec<PairedEvent> = (0..n_pairs)
            .map(|i| PairedEvent {
                gen: (gen_mask[i] != 0).then(|| vec![gen_vals[i]]),
                sim: (sim_mask[i] != 0).then(|| vec![sim_vals[i]]),
                weight: w(i),
            })
            .collect();
        let g_edges = std::slice::from_raw_parts(gen_edges, n_gen_edges);
        let s_edges = std::slice::from_raw_parts(sim_edges, n_sim_edges);
        let response = estimate_response(&pairs, g_edges, s_edges)?;
        *out = Box::into_raw(Box::new(UkResponse { inner: response }));
        Ok(UkStatus::Ok)
    })
}

/// Release a response handle. Null is ignored.
///
/// # Safety
/// `resp` must come from [`uk_response_estimate`], not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uk_response_free(resp: *mut UkResponse) {
    if !resp.is_null() {
        drop(Box::from_raw(resp));
    }
}

/// Bin counts of a response matrix. Null slots are skipped.
///
/// # Safety
/// `resp` must be a live response handle; non-null count pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn uk_response_bins(
    resp: *const UkResponse,
    n_gen: *mut usize,
    n_sim: *mut usize,
) -> UkStatus {
    require_non_null!(resp);
    let inner = &(*resp).inner;
    if !n_gen.is_null() {
        *n_gen = inner.n_gen_bins();
    }
    if !n_sim.is_null() {
        *n_sim = inner.n_sim_bins();
    }
    UkStatus::Ok
}

/// Run iterative Bayesian unfolding against a response matrix. `data`
/// holds the measured histogram (`n_sim` bins), `noise` an optional
/// background histogram to subtract (null = none), and the result is
/// written to `out_unfolded` (`n_gen` bins).
///
/// # Safety
/// `resp` must be a live response handle; `data` must hold the detector
/// bin count, `noise` the same when non-null; `out_unfolded` must be
/// writable for the generator bin count.
#[no_mangle]
pub unsafe extern "C" fn uk_ibu(
    resp: *const UkResponse,
    data: *const f64,
    noise: *const f64,
    n_iterations: usize,
    out_unfolded: *mut f64,
) -> UkStatus {
    require_non_null!(resp);
    require_non_null!(data);
    require_non_null!(out_unfolded);
    guarded(|| {
        let response = &(*resp).inner;
        let n_sim = response.n_sim_bins();
        let n_gen = response.n_gen_bins();
        let data_hist = std::slice::from_raw_parts(data, n_sim);
        let noise_hist = if noise.is_null() {
            Vec::new()
        } else {
            std::slice::from_raw_parts(noise, n_sim).to_vec()
        };
        let result = ibu(response, data_hist, &noise_hist, None, n_iterations)?;
        std::ptr::copy_nonoverlapping(result.unfolded.as_ptr(), out_unfolded, n_gen);
        Ok(UkStatus::Ok)
    })
}
