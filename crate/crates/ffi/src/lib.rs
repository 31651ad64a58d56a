//! C ABI over the sibyl engine.
//!
//! An engine is opened from the five input files and handed out as an opaque
//! pointer. Every call returns a [`SibylStatus`]; on failure the message is
//! available from [`sibyl_last_error_message`] on the same thread. Payloads
//! are returned as JSON strings identical to the HTTP API bodies and must be
//! released with [`sibyl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sibyl_core::dataio::DataPaths;
use sibyl_core::engine::{ChangeRequest, ContributionQuery, ContributionView, EngineConfig};
use sibyl_core::model::RiskScore;
use sibyl_core::{Engine, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SibylStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    ValidationFailed = 4,
    CaseNotFound = 5,
    InvalidInput = 6,
    TooManyChanges = 7,
    InvalidChange = 8,
    FeatureDisabled = 9,
    Internal = 10,
    Panic = 11,
}

/// Loaded engine. Read-only once opened, so one handle may be shared
/// across threads.
pub struct SibylEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SibylStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => SibylStatus::Io,
            Error::Validation(_) => SibylStatus::ValidationFailed,
            Error::CaseNotFound(_) => SibylStatus::CaseNotFound,
            Error::InvalidInput(_) => SibylStatus::InvalidInput,
            Error::LimitExceeded { .. } => SibylStatus::TooManyChanges,
            Error::InvalidChange(_) => SibylStatus::InvalidChange,
            Error::FeatureDisabled(_) => SibylStatus::FeatureDisabled,
            _ => SibylStatus::Internal,
        };
        let message = match &e {
            Error::Validation(report) => format!("{}: {report}", e.code()),
            _ => format!("{}: {e}", e.code()),
        };
        Failure(status, message)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SibylStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SibylStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SibylStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SibylStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SibylStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn engine_arg<'a>(p: *const SibylEngine) -> Result<&'a Engine, Failure> {
    p.as_ref()
        .map(|h| &h.engine)
        .ok_or_else(|| Failure(SibylStatus::NullArgument, "`engine` is null".into()))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(SibylStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn write_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Failure(SibylStatus::Internal, e.to_string()))?;
    let c = CString::new(text).map_err(|e| Failure(SibylStatus::Internal, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn open(paths: DataPaths, review_mode: bool, out: *mut *mut SibylEngine) -> Result<(), Failure> {
    let config = EngineConfig {
        review_mode,
        ..EngineConfig::default()
    };
    let engine = Engine::open(&paths, config)?;
    unsafe { *out = Box::into_raw(Box::new(SibylEngine { engine })) };
    Ok(())
}

/// Opens an engine from explicit file paths. On success `*out` owns a
/// handle to release with [`sibyl_engine_free`].
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn sibyl_engine_open(
    model: *const c_char,
    factors: *const c_char,
    cases: *const c_char,
    outcomes: *const c_char,
    events: *const c_char,
    review_mode: bool,
    out: *mut *mut SibylEngine,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let paths = DataPaths {
            model: PathBuf::from(str_arg(model, "model")?),
            factors: PathBuf::from(str_arg(factors, "factors")?),
            cases: PathBuf::from(str_arg(cases, "cases")?),
            outcomes: PathBuf::from(str_arg(outcomes, "outcomes")?),
            events: PathBuf::from(str_arg(events, "events")?),
        };
        open(paths, review_mode, out)
    })
}

/// Opens an engine from a directory holding the standard file names.
///
/// # Safety
/// As for [`sibyl_engine_open`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_engine_open_dir(
    dir: *const c_char,
    review_mode: bool,
    out: *mut *mut SibylEngine,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        open(DataPaths::in_dir(str_arg(dir, "dir")?), review_mode, out)
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle from an open call, freed only once.
#[no_mangle]
pub unsafe extern "C" fn sibyl_engine_free(engine: *mut SibylEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Number of reference cases.
///
/// # Safety
/// `engine` must be a live handle or null; `out` writable or null.
#[no_mangle]
pub unsafe extern "C" fn sibyl_case_count(engine: *const SibylEngine, out: *mut usize) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        *out = engine_arg(engine)?.corpus().reference.len();
        Ok(())
    })
}

/// Risk score (1 to 20) and raw model output of one case.
///
/// # Safety
/// `engine` must be a live handle or null; strings NUL-terminated; outputs
/// writable or null.
#[no_mangle]
pub unsafe extern "C" fn sibyl_case_score(
    engine: *const SibylEngine,
    case_id: *const c_char,
    out_score: *mut u8,
    out_raw: *mut f64,
) -> SibylStatus {
    guard(|| {
        check_out(out_score)?;
        check_out(out_raw)?;
        let e = engine_arg(engine)?;
        let id = str_arg(case_id, "case_id")?;
        *out_score = e.score_of(id)?.get();
        *out_raw = e.raw_of(id)?;
        Ok(())
    })
}

/// Presented contributions. `view` is "top", "all" or "split", or null for
/// "top".
///
/// # Safety
/// As for [`sibyl_case_score`]; `out` receives a string for
/// [`sibyl_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_contributions_json(
    engine: *const SibylEngine,
    case_id: *const c_char,
    view: *const c_char,
    out: *mut *mut c_char,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        let e = engine_arg(engine)?;
        let id = str_arg(case_id, "case_id")?;
        let view = if view.is_null() {
            ContributionView::Top
        } else {
            str_arg(view, "view")?.parse()?
        };
        let q = ContributionQuery {
            view,
            ..Default::default()
        };
        write_json(out, &e.contributions(id, &q)?)
    })
}

/// Rescores a case under the changes in `request_json`, shaped like the
/// HTTP body: `{"changes":[{"factor":..,"value":..}]}`.
///
/// # Safety
/// As for [`sibyl_contributions_json`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_whatif_json(
    engine: *const SibylEngine,
    case_id: *const c_char,
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        let e = engine_arg(engine)?;
        let id = str_arg(case_id, "case_id")?;
        let req: ChangeRequest = serde_json::from_str(str_arg(request_json, "request_json")?)
            .map_err(|err| Failure(SibylStatus::InvalidInput, format!("BAD_REQUEST: {err}")))?;
        write_json(out, &e.whatif(id, &req.changes)?)
    })
}

/// Effect of reversing each standalone Boolean factor.
///
/// # Safety
/// As for [`sibyl_contributions_json`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_flips_json(
    engine: *const SibylEngine,
    case_id: *const c_char,
    out: *mut *mut c_char,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        let e = engine_arg(engine)?;
        write_json(out, &e.flips(str_arg(case_id, "case_id")?)?)
    })
}

/// Model metadata and presented factor list.
///
/// # Safety
/// As for [`sibyl_contributions_json`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_model_json(engine: *const SibylEngine, out: *mut *mut c_char) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        write_json(out, &engine_arg(engine)?.model_info())
    })
}

/// Global importance computed when the engine was opened.
///
/// # Safety
/// As for [`sibyl_contributions_json`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_importance_json(engine: *const SibylEngine, out: *mut *mut c_char) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        write_json(out, engine_arg(engine)?.importance())
    })
}

/// Distribution bundle for one score in 1..=20.
///
/// # Safety
/// As for [`sibyl_contributions_json`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_distributions_json(
    engine: *const SibylEngine,
    score: u8,
    out: *mut *mut c_char,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        let e = engine_arg(engine)?;
        write_json(out, &e.distributions(RiskScore::new(score)?, None)?)
    })
}

/// Nearest reference cases and timelines. Needs an engine opened in review
/// mode; `k` of 0 means the default.
///
/// # Safety
/// As for [`sibyl_contributions_json`].
#[no_mangle]
pub unsafe extern "C" fn sibyl_similar_json(
    engine: *const SibylEngine,
    case_id: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> SibylStatus {
    guard(|| {
        check_out(out)?;
        let e = engine_arg(engine)?;
        let k = (k != 0).then_some(k);
        write_json(out, &e.similar(str_arg(case_id, "case_id")?, k)?)
    })
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn sibyl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn sibyl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sibyl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
