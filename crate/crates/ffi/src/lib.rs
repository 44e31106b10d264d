//! C ABI over the `bian` crate.
//!
//! Graphs and models are opaque heap handles created by `*_load`,
//! `*_generate` or `*_train` and released with the matching `*_free`.
//! Every fallible call returns a [`BianStatus`]; on failure the message is
//! available from [`bian_last_error`] on the same thread until the next
//! failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bian::data::{generate_synthetic, load, save, SyntheticConfig};
use bian::experiment::test_auroc;
use bian::graph::EdgeAttributedGraph;
use bian::model::{fit, load_checkpoint, predict, save_checkpoint, BianModel as Model, ModelConfig};
use bian::BianError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BianStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Shape = 6,
    Training = 7,
    /// A verification ran and did not pass.
    CheckFailed = 8,
    /// A panic was caught; the handle arguments are left untouched.
    Internal = 9,
}

/// Opaque graph handle.
pub struct BianGraph(EdgeAttributedGraph);

/// Opaque model handle.
pub struct BianModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &BianError) -> BianStatus {
    match e {
        BianError::Io(_) => BianStatus::Io,
        BianError::Format(_) | BianError::Checkpoint(_) => BianStatus::Format,
        BianError::Config(_) => BianStatus::Config,
        BianError::Shape { .. } => BianStatus::Shape,
        BianError::Training(_) | BianError::NonFinite(_) => BianStatus::Training,
        _ => BianStatus::InvalidArgument,
    }
}

fn fail(status: BianStatus, msg: impl Into<String>) -> BianStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<BianStatus, (BianStatus, String)>) -> BianStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => fail(s, msg),
        Err(_) => fail(BianStatus::Internal, "internal panic"),
    }
}

fn lift<T>(r: bian::Result<T>) -> Result<T, (BianStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BianStatus, String) {
    (BianStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BianStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (BianStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BianStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bian_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bian_graph_load(path: *const c_char, out: *mut *mut BianGraph) -> BianStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = lift(load(c_str(path, "path")?))?;
        store(out, BianGraph(g));
        Ok(BianStatus::Ok)
    })
}

/// Writes a dataset file.
///
/// # Safety
/// `graph` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bian_graph_save(graph: *const BianGraph, path: *const c_char) -> BianStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        lift(save(&g.0, c_str(path, "path")?))?;
        Ok(BianStatus::Ok)
    })
}

/// Generates a synthetic graph from a spec such as
/// `"n=5000,fraud_rate=0.05,s=0.9,seed=1"`; NULL or `""` uses defaults.
///
/// # Safety
/// `spec` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bian_graph_generate(spec: *const c_char, out: *mut *mut BianGraph) -> BianStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if spec.is_null() {
            SyntheticConfig::default()
        } else {
            lift(SyntheticConfig::parse_spec(c_str(spec, "spec")?))?
        };
        let g = lift(generate_synthetic(&cfg))?;
        store(out, BianGraph(g));
        Ok(BianStatus::Ok)
    })
}

/// # Safety
/// `graph` must be NULL or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bian_graph_num_nodes(graph: *const BianGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// # Safety
/// `graph` must be NULL or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bian_graph_num_edges(graph: *const BianGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `graph` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bian_graph_free(graph: *mut BianGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Trains a model. `config` holds `key=value` lines and may be NULL for
/// defaults.
///
/// # Safety
/// `graph` must come from this library, `config` be NULL or
/// NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bian_model_train(
    graph: *const BianGraph,
    config: *const c_char,
    out: *mut *mut BianModel,
) -> BianStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config.is_null() {
            ModelConfig::default()
        } else {
            lift(ModelConfig::from_kv(c_str(config, "config")?))?
        };
        let model = lift(Model::new(cfg, g.0.node_attr_dim()))?;
        let trained = lift(fit(model, &g.0))?;
        store(out, BianModel(trained.model));
        Ok(BianStatus::Ok)
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bian_model_load(path: *const c_char, out: *mut *mut BianModel) -> BianStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = lift(load_checkpoint(c_str(path, "path")?))?;
        store(out, BianModel(m));
        Ok(BianStatus::Ok)
    })
}

/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bian_model_save(model: *const BianModel, path: *const c_char) -> BianStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        lift(save_checkpoint(&m.0, c_str(path, "path")?))?;
        Ok(BianStatus::Ok)
    })
}

/// Writes one logit per entry of `nodes` into `out` (both of length `len`).
///
/// # Safety
/// Handles must come from this library; `nodes` and `out` must point to
/// `len` elements (they may be NULL when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn bian_model_predict(
    model: *const BianModel,
    graph: *const BianGraph,
    nodes: *const usize,
    len: usize,
    out: *mut f64,
) -> BianStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let g = borrow(graph, "graph")?;
        if len == 0 {
            return Ok(BianStatus::Ok);
        }
        if nodes.is_null() || out.is_null() {
            return Err(null("nodes or out"));
        }
        let ids = std::slice::from_raw_parts(nodes, len);
        if let Some(&bad) = ids.iter().find(|&&i| i >= g.0.num_nodes()) {
            return Err((BianStatus::InvalidArgument, format!("node {bad} out of range")));
        }
        let scores = lift(predict(&m.0, &g.0, ids))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&scores);
        Ok(BianStatus::Ok)
    })
}

/// Test-split AUROC of `model` on `graph`.
///
/// # Safety
/// Handles must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn bian_model_test_auroc(
    model: *const BianModel,
    graph: *const BianGraph,
    out: *mut f64,
) -> BianStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let g = borrow(graph, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(test_auroc(&m.0, &g.0))?;
        Ok(BianStatus::Ok)
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bian_model_free(model: *mut BianModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// AUROC of `scores` against 0/1 `labels`, both of length `len`.
///
/// # Safety
/// `scores` and `labels` must point to `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bian_auroc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> BianStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return Err(null("scores, labels or out"));
        }
        let s = std::slice::from_raw_parts(scores, len);
        let y: Vec<bool> = std::slice::from_raw_parts(labels, len).iter().map(|&b| b != 0).collect();
        *out = lift(bian::metrics::auroc(s, &y))?;
        Ok(BianStatus::Ok)
    })
}

/// Randomized check of the temporal encoding identity and temporal
/// attention shift invariance. Writes the worst residual and shift change
/// (either pointer may be NULL) and returns `CheckFailed` if a bound is
/// exceeded.
///
/// # Safety
/// Non-NULL output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bian_verify_lemma(
    trials: usize,
    seed: u64,
    max_residual: *mut f64,
    max_shift_delta: *mut f64,
) -> BianStatus {
    guard(|| {
        let r = lift(bian::checks::lemma_suite(trials, seed))?;
        if !max_residual.is_null() {
            *max_residual = r.max_residual;
        }
        if !max_shift_delta.is_null() {
            *max_shift_delta = r.max_shift_delta;
        }
        if r.passed() {
            Ok(BianStatus::Ok)
        } else {
            Err((
                BianStatus::CheckFailed,
                format!("residual {:e}, shift delta {:e}", r.max_residual, r.max_shift_delta),
            ))
        }
    })
}
