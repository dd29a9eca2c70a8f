//! C interface to the relsynth synthesizer.
//!
//! Every fallible call returns an `RsStatus` code; on failure a message is kept
//! per thread and can be fetched with `rs_last_error`. Handles are opaque and
//! must be released with their matching `_free` function.

use relsynth::error::Error;
use relsynth::orchestrator::{auto_delta, synthesize_database, RunSettings};
use relsynth::privacy::{ci_width_demo, solve_gamma};
use relsynth::relational::{load_database, Database, Schema};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Budget = 4,
    Numeric = 5,
    Io = 6,
    Internal = 7,
}

/// Opaque database handle.
pub struct RsDatabase {
    db: Database,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RsStatus {
    match e {
        Error::Config(_) | Error::Json(_) => RsStatus::Config,
        Error::BudgetOverdraw { .. } => RsStatus::Budget,
        Error::Numeric(_) | Error::WidthExceeded { .. } => RsStatus::Numeric,
        Error::Io { .. } => RsStatus::Io,
        Error::Schema(_)
        | Error::Integrity(_)
        | Error::Type(_)
        | Error::CapExceeded { .. }
        | Error::IncompleteRow { .. }
        | Error::Domain(_)
        | Error::Csv { .. } => RsStatus::Data,
        _ => RsStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (RsStatus, String)>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RsStatus::Ok
        }
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            RsStatus::Internal
        }
    }
}

fn lift<T>(r: relsynth::error::Result<T>) -> Result<T, (RsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (RsStatus, String)> {
    if p.is_null() {
        return Err((RsStatus::NullPointer, format!("{what} is null")));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| (RsStatus::Config, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Analytic Gaussian γ for (ε, δ).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_solve_gamma(epsilon: f64, delta: f64, out: *mut f64) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err((RsStatus::NullPointer, "out is null".into()));
        }
        *out = lift(solve_gamma(epsilon, delta))?;
        Ok(())
    })
}

/// 95% confidence interval widths for one tuple and for all `m` tuples of a
/// group, each under its own sensitivity.
///
/// # Safety
/// `one` and `all` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rs_ci_width(m: f64, epsilon: f64, delta: f64, one: *mut f64, all: *mut f64) -> RsStatus {
    guard(|| {
        if one.is_null() || all.is_null() {
            return Err((RsStatus::NullPointer, "output pointer is null".into()));
        }
        let (w_all, w_one, _) = lift(ci_width_demo(m, epsilon, delta))?;
        *one = w_one;
        *all = w_all;
        Ok(())
    })
}

/// Loads a schema JSON file and one CSV per relation from `data_dir`.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_database_load(
    schema_path: *const c_char,
    data_dir: *const c_char,
    out: *mut *mut RsDatabase,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err((RsStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let schema = lift(Schema::load(&path_arg(schema_path, "schema_path")?))?;
        let db = lift(load_database(&schema, &path_arg(data_dir, "data_dir")?))?;
        *out = Box::into_raw(Box::new(RsDatabase { db }));
        Ok(())
    })
}

/// # Safety
/// `db` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rs_database_free(db: *mut RsDatabase) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Number of rows of relation `name`.
///
/// # Safety
/// `db` must be a live handle, `name` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rs_database_rows(db: *const RsDatabase, name: *const c_char, out: *mut usize) -> RsStatus {
    guard(|| {
        if db.is_null() || name.is_null() || out.is_null() {
            return Err((RsStatus::NullPointer, "null argument".into()));
        }
        let name = CStr::from_ptr(name).to_str().map_err(|_| (RsStatus::Config, "name is not UTF-8".into()))?;
        let rel = (*db).db.relation(name).ok_or_else(|| (RsStatus::Config, format!("no relation named {name}")))?;
        *out = rel.len();
        Ok(())
    })
}

/// Schema of the database as a JSON string; release it with `rs_string_free`.
/// Returns NULL on failure.
///
/// # Safety
/// `db` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_database_schema_json(db: *const RsDatabase) -> *mut c_char {
    let mut out = ptr::null_mut();
    guard(|| {
        if db.is_null() {
            return Err((RsStatus::NullPointer, "db is null".into()));
        }
        let text = serde_json::to_string(&(*db).db.schema).map_err(|e| (RsStatus::Internal, e.to_string()))?;
        out = CString::new(text).map_err(|e| (RsStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    });
    out
}

/// Writes one CSV per relation into `dir`.
///
/// # Safety
/// `db` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rs_database_write(db: *const RsDatabase, dir: *const c_char) -> RsStatus {
    guard(|| {
        if db.is_null() {
            return Err((RsStatus::NullPointer, "db is null".into()));
        }
        lift((*db).db.write_dir(&path_arg(dir, "dir")?))
    })
}

/// Synthesizes a database. `delta <= 0` selects 1 / rows of the largest
/// secondary relation. `settings_json` may be NULL or a JSON object with any
/// of `config`, `tau` and `stage_weights`. On success `*out` holds a new handle
/// and `*cost` the privacy cost spent.
///
/// # Safety
/// `db` must be a live handle, `settings_json` NULL or NUL-terminated, and
/// `out` and `cost` valid pointers (`cost` may be NULL).
#[no_mangle]
pub unsafe extern "C" fn rs_synthesize(
    db: *const RsDatabase,
    epsilon: f64,
    delta: f64,
    seed: u64,
    settings_json: *const c_char,
    out: *mut *mut RsDatabase,
    cost: *mut f64,
) -> RsStatus {
    guard(|| {
        if db.is_null() || out.is_null() {
            return Err((RsStatus::NullPointer, "null argument".into()));
        }
        *out = ptr::null_mut();
        let real = &(*db).db;
        let delta = if delta > 0.0 { delta } else { lift(auto_delta(real))? };
        let mut v = serde_json::json!({ "epsilon": epsilon, "delta": delta, "seed": seed });
        if !settings_json.is_null() {
            let text = CStr::from_ptr(settings_json).to_str().map_err(|_| (RsStatus::Config, "settings are not UTF-8".into()))?;
            let extra: serde_json::Value = serde_json::from_str(text).map_err(|e| (RsStatus::Config, e.to_string()))?;
            let obj = extra.as_object().ok_or_else(|| (RsStatus::Config, "settings must be a JSON object".into()))?;
            for (k, x) in obj {
                if !matches!(k.as_str(), "config" | "tau" | "stage_weights") {
                    return Err((RsStatus::Config, format!("unknown settings key {k}")));
                }
                v[k] = x.clone();
            }
        }
        let settings: RunSettings = serde_json::from_value(v).map_err(|e| (RsStatus::Config, e.to_string()))?;
        let res = lift(synthesize_database(real, &settings))?;
        if !cost.is_null() {
            *cost = res.ledger.spent();
        }
        *out = Box::into_raw(Box::new(RsDatabase { db: res.database }));
        Ok(())
    })
}
