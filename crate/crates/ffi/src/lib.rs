//! C ABI over the `mcdl` library.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Every fallible call returns an [`McdlStatus`]; on failure a message is
//! kept per thread and read back with [`mcdl_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mcdl::codec::{decode_conditional, encode_conditional, Bitstream};
use mcdl::estimator::{
    minimize_mcdl, sweep_scalar, McdlObjective as Objective, MinimizeOptions, ObservationSet,
};
use mcdl::graph::{SubsetFamily, SubsetSpec};
use mcdl::model::{ModelFile, PairwiseModel, ParameterTying};
use mcdl::oracle::{run_oracle_suite, ORACLE_TOLERANCE};
use mcdl::sampler::{sample_sequence, SampleSequence};
use mcdl::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McdlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed model, sample, or bitstream input.
    Parse = 3,
    /// Subset is intractable or not a tree where one is required.
    Intractable = 4,
    /// Bitstream was produced under a different model or geometry.
    DigestMismatch = 5,
    Io = 6,
    /// Output buffer length does not match.
    BufferSize = 7,
    Panic = 8,
}

impl From<&Error> for McdlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Intractable { .. } | Error::NotATree | Error::TooLargeForEnumeration { .. } => {
                McdlStatus::Intractable
            }
            Error::ModelFile(_)
            | Error::SampleFile { .. }
            | Error::Bitstream(_)
            | Error::Json(_) => McdlStatus::Parse,
            Error::DigestMismatch { .. } => McdlStatus::DigestMismatch,
            Error::Io(_) => McdlStatus::Io,
            _ => McdlStatus::InvalidArgument,
        }
    }
}

/// Model with its parameter tying.
pub struct McdlModel {
    model: PairwiseModel,
    tying: ParameterTying,
}

/// Sample sequence over one subset closure.
pub struct McdlSamples {
    inner: SampleSequence,
}

/// Empirical MCDL objective in the free parameters of a tying.
pub struct McdlObjective {
    inner: Objective,
}

/// Outcome of [`mcdl_objective_minimize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McdlMinimizeResult {
    pub objective_nats: f64,
    pub objective_bits_per_site: f64,
    pub gradient_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

struct Failure(McdlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(McdlStatus::from(&e), e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> McdlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McdlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            McdlStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(McdlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(McdlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn floats<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn floats_mut<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn check_len(what: &str, expected: usize, actual: usize) -> FfiResult {
    if expected == actual {
        Ok(())
    } else {
        Err(Failure(
            McdlStatus::BufferSize,
            format!("{what}: expected length {expected}, got {actual}"),
        ))
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(McdlStatus::InvalidArgument, message.into())
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcdl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mcdl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model from the JSON model-file format.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcdl_model_from_json(
    json: *const c_char,
    out: *mut *mut McdlModel,
) -> McdlStatus {
    guard(|| {
        let (model, tying) = ModelFile::parse(text(json, "json")?)?.build()?;
        put(out, McdlModel { model, tying }, "out")
    })
}

/// Homogeneous grid model; the single free parameter is the shared edge
/// coupling, node parameters stay fixed.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcdl_model_homogeneous(
    height: usize,
    width: usize,
    toroidal: bool,
    node_param: f64,
    edge_param: f64,
    out: *mut *mut McdlModel,
) -> McdlStatus {
    guard(|| {
        let graph = std::sync::Arc::new(mcdl::graph::build_grid(height, width, toroidal)?);
        let model = PairwiseModel::homogeneous(graph, node_param, edge_param)?;
        let tying = ParameterTying::homogeneous(&model)?;
        put(out, McdlModel { model, tying }, "out")
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mcdl_model_free(model: *mut McdlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_model_node_count(model: *const McdlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.graph().node_count())
}

/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_model_edge_count(model: *const McdlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.graph().edge_count())
}

/// Number of free parameters under the model's tying.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_model_free_count(model: *const McdlModel) -> usize {
    model.as_ref().map_or(0, |m| m.tying.free_count())
}

/// Runs the Gibbs sampler. `subset` uses the CLI syntax (`middle-row`,
/// `row:K`, `site:R,C`, `nodes:a,b`, `all`).
///
/// # Safety
/// Pointers must be valid; `subset` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_generate(
    model: *const McdlModel,
    subset: *const c_char,
    n: usize,
    burn_in: usize,
    spacing: usize,
    seed: u64,
    out: *mut *mut McdlSamples,
) -> McdlStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let spec: SubsetSpec = text(subset, "subset")?.parse()?;
        let inner = sample_sequence(&m.model, &spec, n, burn_in, spacing, seed)?;
        put(out, McdlSamples { inner }, "out")
    })
}

/// Parses sample-file text against the model's graph.
///
/// # Safety
/// Pointers must be valid; `text` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_parse(
    model: *const McdlModel,
    text_in: *const c_char,
    out: *mut *mut McdlSamples,
) -> McdlStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let inner = SampleSequence::parse(text(text_in, "text")?, m.model.graph())?;
        put(out, McdlSamples { inner }, "out")
    })
}

/// Serializes to sample-file text. Release with [`mcdl_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_to_text(
    samples: *const McdlSamples,
    model: *const McdlModel,
    out: *mut *mut c_char,
) -> McdlStatus {
    guard(|| {
        let s = borrow(samples, "samples")?;
        let m = borrow(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let body = s.inner.to_text(m.model.graph())?;
        *out = CString::new(body)
            .expect("sample text has no nul")
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `samples` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_len(samples: *const McdlSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.inner.len())
}

/// Closure size: the number of spins stored per configuration.
///
/// # Safety
/// `samples` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_closure_len(samples: *const McdlSamples) -> usize {
    samples
        .as_ref()
        .map_or(0, |s| s.inner.geometry().closure().len())
}

/// Subset size: the number of spins coded per configuration.
///
/// # Safety
/// `samples` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_subset_len(samples: *const McdlSamples) -> usize {
    samples
        .as_ref()
        .map_or(0, |s| s.inner.geometry().subset().len())
}

/// # Safety
/// `samples` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mcdl_samples_free(samples: *mut McdlSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

/// Objective over every configuration of `samples` on its own subset.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_temporal(
    model: *const McdlModel,
    samples: *const McdlSamples,
    out: *mut *mut McdlObjective,
) -> McdlStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let s = borrow(samples, "samples")?;
        let obs = ObservationSet::temporal(m.model.shared_graph().clone(), &s.inner)?;
        let inner = Objective::new(obs, m.tying.clone())?;
        put(out, McdlObjective { inner }, "out")
    })
}

/// Objective over many subsets of one full configuration (`samples` must
/// cover the whole grid). `family` is `rows`, `rows:A-B`, or `sites`.
///
/// # Safety
/// Pointers must be valid; `family` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_spatial(
    model: *const McdlModel,
    samples: *const McdlSamples,
    index: usize,
    family: *const c_char,
    out: *mut *mut McdlObjective,
) -> McdlStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let s = borrow(samples, "samples")?;
        let family: SubsetFamily = text(family, "family")?.parse()?;
        let n = m.model.graph().node_count();
        if s.inner.geometry().closure().len() != n {
            return Err(invalid(
                "spatial objective needs samples over the whole grid",
            ));
        }
        if index >= s.inner.len() {
            return Err(invalid(format!("index {index} out of range")));
        }
        let config = s.inner.full_config(index, n);
        let obs = ObservationSet::spatial(
            m.model.shared_graph().clone(),
            &config,
            family.geometries(m.model.graph())?,
        )?;
        let inner = Objective::new(obs, m.tying.clone())?;
        put(out, McdlObjective { inner }, "out")
    })
}

/// # Safety
/// `objective` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_free_count(objective: *const McdlObjective) -> usize {
    objective.as_ref().map_or(0, |o| o.inner.free_count())
}

/// Objective value in nats at the free parameters `theta[0..len]`.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_value(
    objective: *const McdlObjective,
    theta: *const f64,
    len: usize,
    value: *mut f64,
) -> McdlStatus {
    guard(|| {
        let o = borrow(objective, "objective")?;
        let theta = floats(theta, len, "theta")?;
        check_len("theta", o.inner.free_count(), len)?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = o.inner.value(theta)?;
        Ok(())
    })
}

/// Gradient written to `grad[0..len]`; `len` must equal the free count.
///
/// # Safety
/// Pointers must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_gradient(
    objective: *const McdlObjective,
    theta: *const f64,
    len: usize,
    grad: *mut f64,
) -> McdlStatus {
    guard(|| {
        let o = borrow(objective, "objective")?;
        let theta = floats(theta, len, "theta")?;
        check_len("theta", o.inner.free_count(), len)?;
        let out = floats_mut(grad, len, "grad")?;
        out.copy_from_slice(&o.inner.gradient(theta)?);
        Ok(())
    })
}

/// Gradient descent from `theta` (in/out, `len` free parameters). Returns
/// `Ok` even without convergence; check `result->converged`.
///
/// # Safety
/// Pointers must be valid; `theta` for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_minimize(
    objective: *const McdlObjective,
    grad_tol: f64,
    max_iters: usize,
    theta: *mut f64,
    len: usize,
    result: *mut McdlMinimizeResult,
) -> McdlStatus {
    guard(|| {
        let o = borrow(objective, "objective")?;
        check_len("theta", o.inner.free_count(), len)?;
        let theta = floats_mut(theta, len, "theta")?;
        if result.is_null() {
            return Err(null("result"));
        }
        let opts = MinimizeOptions {
            grad_tol,
            max_iters,
            initial: Some(theta.to_vec()),
            ..MinimizeOptions::default()
        };
        let report = minimize_mcdl(&o.inner, &opts)?;
        theta.copy_from_slice(&report.theta);
        *result = McdlMinimizeResult {
            objective_nats: report.objective_nats,
            objective_bits_per_site: report.objective_bits_per_site,
            gradient_inf_norm: report.gradient_inf_norm,
            iterations: report.iterations,
            converged: report.converged,
        };
        Ok(())
    })
}

/// Evaluates a one-parameter objective at `count` evenly spaced points of
/// `[lo, hi]`, writing values (nats) to `values[0..count]` and the grid
/// minimizer to `argmin`.
///
/// # Safety
/// Pointers must be valid; `values` for `count` elements.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_sweep(
    objective: *const McdlObjective,
    lo: f64,
    hi: f64,
    count: usize,
    values: *mut f64,
    argmin: *mut f64,
) -> McdlStatus {
    guard(|| {
        let o = borrow(objective, "objective")?;
        let values = floats_mut(values, count, "values")?;
        if argmin.is_null() {
            return Err(null("argmin"));
        }
        let result = sweep_scalar(&o.inner, lo, hi, count)?;
        for (slot, point) in values.iter_mut().zip(&result.points) {
            *slot = point.objective;
        }
        *argmin = result.argmin;
        Ok(())
    })
}

/// # Safety
/// `objective` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mcdl_objective_free(objective: *mut McdlObjective) {
    if !objective.is_null() {
        drop(Box::from_raw(objective));
    }
}

fn split_sample(s: &SampleSequence, index: usize) -> FfiResult<(Vec<i8>, Vec<i8>)> {
    let config = s
        .configs()
        .get(index)
        .ok_or_else(|| invalid(format!("index {index} out of range")))?;
    Ok(s.geometry().split_closure(config)?)
}

/// Encodes configuration `index` of `samples` given its boundary. The
/// bitstream file bytes are returned in `*bytes`/`*len`; release with
/// [`mcdl_bytes_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcdl_encode(
    model: *const McdlModel,
    samples: *const McdlSamples,
    index: usize,
    bytes: *mut *mut u8,
    len: *mut usize,
) -> McdlStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let s = borrow(samples, "samples")?;
        if bytes.is_null() || len.is_null() {
            return Err(null("bytes/len"));
        }
        let (x, bd) = split_sample(&s.inner, index)?;
        let encoded = encode_conditional(&m.model, s.inner.geometry(), &x, &bd)?.to_bytes();
        let boxed = encoded.into_boxed_slice();
        *len = boxed.len();
        *bytes = Box::into_raw(boxed).cast();
        Ok(())
    })
}

/// Decodes a bitstream using the boundary of configuration `index` of
/// `samples`; writes `subset_len` spins (+1/-1) to `spins`.
///
/// # Safety
/// Pointers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn mcdl_decode(
    model: *const McdlModel,
    samples: *const McdlSamples,
    index: usize,
    bytes: *const u8,
    len: usize,
    spins: *mut i8,
    subset_len: usize,
) -> McdlStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let s = borrow(samples, "samples")?;
        if bytes.is_null() && len > 0 {
            return Err(null("bytes"));
        }
        let input = if len == 0 {
            &[][..]
        } else {
            slice::from_raw_parts(bytes, len)
        };
        check_len("spins", s.inner.geometry().subset().len(), subset_len)?;
        if spins.is_null() {
            return Err(null("spins"));
        }
        let (_, bd) = split_sample(&s.inner, index)?;
        let stream = Bitstream::from_bytes(input)?;
        let x = decode_conditional(&m.model, s.inner.geometry(), &bd, &stream)?;
        slice::from_raw_parts_mut(spins, subset_len).copy_from_slice(&x);
        Ok(())
    })
}

/// Runs `trials` randomized tree-inference checks against enumeration.
///
/// # Safety
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcdl_oracle_check(
    trials: usize,
    max_subset: usize,
    seed: u64,
    passed: *mut usize,
) -> McdlStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("passed"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        *passed = run_oracle_suite(&mut rng, trials, max_subset, ORACLE_TOLERANCE)?.passed;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mcdl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `bytes`/`len` must be exactly as returned by [`mcdl_encode`].
#[no_mangle]
pub unsafe extern "C" fn mcdl_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}
