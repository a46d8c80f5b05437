//! C ABI over the explanation engine.
//!
//! Every fallible function returns an [`SxStatus`]; on failure a message is
//! available from [`sx_last_error`] on the same thread. Handles are opaque
//! and must be released with their `*_free` function. Strings returned as
//! `char *` are owned by the caller and released with [`sx_string_free`].
//! Rational numbers cross the boundary as decimal or `p/q` strings.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spex_core::model::Network;
use spex_core::rational::parse_rational;
use spex_core::search::Budget;
use spex_core::strategies::{Engine, Explanation, Pipeline};
use spex_core::{Error, Formula, Point};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Model = 5,
    Misclassified = 6,
    Pipeline = 7,
    Timeout = 8,
    Invalid = 9,
    Internal = 10,
}

/// A loaded network together with its cached encodings.
pub struct SxNetwork {
    engine: Engine,
}

/// A certified explanation.
pub struct SxExplanation {
    explanation: Explanation,
    names: Vec<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SxStatus {
    match e {
        Error::Io { .. } => SxStatus::Io,
        Error::Parse(_) | Error::Number(_) | Error::Syntax { .. } | Error::Json(_) | Error::Csv(_) => SxStatus::Parse,
        Error::Dimension { .. }
        | Error::Domain { .. }
        | Error::Length { .. }
        | Error::UnknownClass(_)
        | Error::UnknownLabel { .. }
        | Error::UnknownVariable(_) => SxStatus::Model,
        Error::Misclassified { .. } => SxStatus::Misclassified,
        Error::Pipeline(_) | Error::Partition(_) | Error::Argument(_) | Error::Context(_) => SxStatus::Pipeline,
        Error::Timeout => SxStatus::Timeout,
        Error::Invalid(_) | Error::Sat => SxStatus::Invalid,
        Error::Interpolation(_) => SxStatus::Internal,
    }
}

enum Failure {
    Status(SxStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard<F>(body: F) -> SxStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SxStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SxStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(SxStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(SxStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn point(values: *const *const c_char, len: usize) -> Result<Point, Failure> {
    if values.is_null() {
        return Err(null("values"));
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        out.push(parse_rational(text(*values.add(i), "value")?)?);
    }
    Ok(Point::new(out))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn new_network(net: Network) -> Result<*mut SxNetwork, Failure> {
    Ok(Box::into_raw(Box::new(SxNetwork {
        engine: Engine::new(net)?,
    })))
}

/// Message describing the last failure on this thread, or NULL. After
/// [`sx_check`] reports an invalid formula it holds the counterexample. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a network description from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sx_network_load(path: *const c_char, out: *mut *mut SxNetwork) -> SxStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = new_network(spex_core::model::load_network(path)?)?;
        Ok(())
    })
}

/// Parses a network description from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sx_network_from_json(json: *const c_char, out: *mut *mut SxNetwork) -> SxStatus {
    guard(|| {
        let json = text(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = new_network(Network::from_json_str(json)?)?;
        Ok(())
    })
}

/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sx_network_free(net: *mut SxNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of input features; 0 for a NULL handle.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_network_input_count(net: *const SxNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.engine.network().input_count())
}

/// Number of classes; 0 for a NULL handle.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_network_class_count(net: *const SxNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.engine.network().classes().len())
}

/// Name of class `class`, or NULL when out of range. Free with
/// [`sx_string_free`].
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_network_class_name(net: *const SxNetwork, class: usize) -> *mut c_char {
    match net.as_ref() {
        Some(n) if class < n.engine.network().classes().len() => {
            owned_string(n.engine.network().class_name(class).to_string())
        }
        _ => ptr::null_mut(),
    }
}

/// Classifies a point given as `len` rational strings.
///
/// # Safety
/// `values` must point to `len` NUL-terminated strings; `out_class` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sx_classify(
    net: *const SxNetwork,
    values: *const *const c_char,
    len: usize,
    out_class: *mut usize,
) -> SxStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let p = point(values, len)?;
        if out_class.is_null() {
            return Err(null("out_class"));
        }
        *out_class = net.engine.network().classify(&p)?;
        Ok(())
    })
}

/// Runs a pipeline descriptor such as `"A;I:8;G:weak"` on a sample and
/// returns the certified explanation of its predicted class. A
/// non-positive `timeout_s` means no limit.
///
/// # Safety
/// Pointers must be valid as for [`sx_classify`]; `pipeline` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sx_explain(
    net: *const SxNetwork,
    values: *const *const c_char,
    len: usize,
    pipeline: *const c_char,
    timeout_s: f64,
    out: *mut *mut SxExplanation,
) -> SxStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let p = point(values, len)?;
        let descriptor = text(pipeline, "pipeline")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let names = net.engine.feature_names().to_vec();
        let pipeline = Pipeline::parse(descriptor, &names, None)?;
        let budget = if timeout_s > 0.0 {
            Budget::seconds(timeout_s)
        } else {
            Budget::unlimited()
        };
        let explanation = net.engine.run(&pipeline, &p, &budget)?;
        *out = Box::into_raw(Box::new(SxExplanation { explanation, names }));
        Ok(())
    })
}

/// Checks that `formula` (s-expression syntax) implies class `class`;
/// writes 1 to `out_valid` when it does and 0 otherwise.
///
/// # Safety
/// `formula` must be NUL-terminated and `out_valid` valid.
#[no_mangle]
pub unsafe extern "C" fn sx_check(
    net: *const SxNetwork,
    formula: *const c_char,
    class: usize,
    out_valid: *mut i32,
) -> SxStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let f = Formula::parse(text(formula, "formula")?)?;
        if out_valid.is_null() {
            return Err(null("out_valid"));
        }
        *out_valid = match net.engine.certify(&f, class, &Budget::unlimited()) {
            Ok(()) => 1,
            Err(Error::Invalid(msg)) => {
                set_error(msg);
                0
            }
            Err(e) => return Err(e.into()),
        };
        Ok(())
    })
}

/// The explanation formula in s-expression syntax. Free with
/// [`sx_string_free`].
///
/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_explanation_formula(e: *const SxExplanation) -> *mut c_char {
    e.as_ref()
        .map_or(ptr::null_mut(), |e| owned_string(e.explanation.formula().to_string()))
}

/// The pipeline that produced the explanation. Free with [`sx_string_free`].
///
/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_explanation_pipeline(e: *const SxExplanation) -> *mut c_char {
    e.as_ref()
        .map_or(ptr::null_mut(), |e| owned_string(e.explanation.descriptor(&e.names)))
}

/// # Safety
/// `e` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_explanation_class(e: *const SxExplanation) -> usize {
    e.as_ref().map_or(usize::MAX, |e| e.explanation.target_class())
}

/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_explanation_terms(e: *const SxExplanation) -> usize {
    e.as_ref().map_or(0, |e| e.explanation.metrics.terms)
}

/// Top-level solver calls spent by the pipeline.
///
/// # Safety
/// `e` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sx_explanation_solver_calls(e: *const SxExplanation) -> u64 {
    e.as_ref().map_or(0, |e| e.explanation.metrics.solver_calls())
}

/// # Safety
/// `e` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sx_explanation_free(e: *mut SxExplanation) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
