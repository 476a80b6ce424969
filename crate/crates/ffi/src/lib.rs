//! C ABI for the vstash retrieval engine.
//!
//! Conventions:
//! - Every fallible call returns a [`VstashStatus`]; on failure the message
//!   is available from [`vstash_last_error`] on the same thread.
//! - Strings returned through out-pointers are owned by the caller and must
//!   be released with [`vstash_string_free`].
//! - A [`VstashStore`] handle may be shared across threads.
//! - Panics never cross the boundary; they surface as `VSTASH_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vstash_core::embedder::{EmbedderSpec, EmbeddingProvider};
use vstash_core::ingest::{ingest_text, ChunkerChoice};
use vstash_core::retrieval::{search, SearchMode, SearchOptions};
use vstash_core::store::{OpenOptions, Store};
use vstash_core::{Error, FusionConfig};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VstashStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Corrupt = 5,
    SchemaVersion = 6,
    EmptyStore = 7,
    Io = 8,
    Storage = 9,
    Internal = 10,
}

/// Opaque store handle: a store plus the embedder its vectors came from.
pub struct VstashStore {
    store: Store,
    embedder: Box<dyn EmbeddingProvider>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> VstashStatus {
    match err {
        Error::StoreMissing(_) | Error::MissingChunk(_) => VstashStatus::NotFound,
        Error::Corrupt(_) => VstashStatus::Corrupt,
        Error::SchemaVersion { .. } => VstashStatus::SchemaVersion,
        Error::EmptyStore => VstashStatus::EmptyStore,
        Error::Io(_) => VstashStatus::Io,
        Error::Storage(_) => VstashStatus::Storage,
        _ => VstashStatus::InvalidArgument,
    }
}

struct Fail(VstashStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(VstashStatus::Internal, e.to_string())
    }
}

/// Runs `body`, converting errors and panics to a status and last-error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> VstashStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VstashStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            VstashStatus::Internal
        }
    }
}

/// # Safety
/// `ptr` is null or a NUL-terminated string valid for the call.
unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if ptr.is_null() {
        return Err(Fail(VstashStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail(VstashStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// # Safety
/// As [`required_str`], but null maps to `None`.
unsafe fn optional_str<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if ptr.is_null() {
        Ok(None)
    } else {
        required_str(ptr, name).map(Some)
    }
}

/// # Safety
/// `handle` is null or a live pointer from [`vstash_open`].
unsafe fn handle_ref<'a>(handle: *const VstashStore) -> Result<&'a VstashStore, Fail> {
    handle
        .as_ref()
        .ok_or_else(|| Fail(VstashStatus::NullArgument, "store handle is null".into()))
}

fn out_string(out: *mut *mut c_char, value: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(VstashStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(value).map_err(|_| Fail(VstashStatus::Internal, "string contains NUL".into()))?;
    // SAFETY: checked non-null above; the caller provides writable storage.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn vstash_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn vstash_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Opens (or with `create`, creates) a store.
///
/// `embedder` selects the provider (`test`, `test:<dim>` or
/// `precomputed:<path>`); null uses the store's recorded selector, or the
/// default test embedder.
///
/// # Safety
/// `path` and a non-null `embedder` must be NUL-terminated strings; `out`
/// must be writable. On success `*out` owns a handle for [`vstash_close`].
#[no_mangle]
pub unsafe extern "C" fn vstash_open(
    path: *const c_char,
    create: bool,
    embedder: *const c_char,
    out: *mut *mut VstashStore,
) -> VstashStatus {
    guard(|| {
        let path = required_str(path, "path")?;
        let selector = optional_str(embedder, "embedder")?;
        if out.is_null() {
            return Err(Fail(VstashStatus::NullArgument, "output pointer is null".into()));
        }
        let fresh = !std::path::Path::new(path).exists();
        let store = Store::open_with(
            path,
            OpenOptions {
                create_if_missing: create,
                embedder: if fresh { selector.map(str::to_owned) } else { None },
                ..OpenOptions::default()
            },
        )?;
        let selector = selector
            .map(str::to_owned)
            .or_else(|| store.embedder_spec())
            .unwrap_or_else(|| EmbedderSpec::default().to_string());
        let embedder = selector.parse::<EmbedderSpec>()?.build()?;
        if store.embedder_spec().is_none() {
            store.set_embedder_spec(&selector)?;
        }
        *out = Box::into_raw(Box::new(VstashStore { store, embedder }));
        Ok(())
    })
}

/// Closes a handle. Null is ignored.
///
/// # Safety
/// `handle` is null or a pointer from [`vstash_open`] not yet closed.
#[no_mangle]
pub unsafe extern "C" fn vstash_close(handle: *mut VstashStore) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Chunks, embeds and stores `text` as a prose document. A complete copy
/// with identical content is skipped. Writes the document id to
/// `out_doc_id` when it is non-null.
///
/// # Safety
/// `handle` is live; `uri` and `text` are NUL-terminated; `collection` is
/// null (meaning `default`) or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vstash_add_text(
    handle: *const VstashStore,
    uri: *const c_char,
    collection: *const c_char,
    text: *const c_char,
    out_doc_id: *mut i64,
) -> VstashStatus {
    guard(|| {
        let h = handle_ref(handle)?;
        let uri = required_str(uri, "uri")?;
        let collection = optional_str(collection, "collection")?.unwrap_or("default");
        let text = required_str(text, "text")?;
        let outcome = ingest_text(&h.store, h.embedder.as_ref(), uri, collection, text, ChunkerChoice::Prose, &[])?;
        if !out_doc_id.is_null() {
            *out_doc_id = outcome.doc_id;
        }
        Ok(())
    })
}

/// Searches and writes a JSON array of results to `*out_json`, each
/// `{chunk_id, doc_id, score, tier, context, diagnostics}`.
///
/// `mode` is null (hybrid) or one of `hybrid`, `vector`, `fts`. Searches
/// through this call do not record telemetry.
///
/// # Safety
/// `handle` is live; `query` is NUL-terminated; `mode` is null or
/// NUL-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn vstash_search_json(
    handle: *const VstashStore,
    query: *const c_char,
    k: u32,
    mode: *const c_char,
    out_json: *mut *mut c_char,
) -> VstashStatus {
    guard(|| {
        let h = handle_ref(handle)?;
        let query = required_str(query, "query")?;
        let mode: SearchMode = optional_str(mode, "mode")?.unwrap_or("hybrid").parse()?;
        let opts = SearchOptions {
            k: k as usize,
            mode,
            ..SearchOptions::default()
        }
        .read_only();
        let response = search(&h.store, h.embedder.as_ref(), query, &opts, &FusionConfig::default())?;
        out_string(out_json, serde_json::to_string(&response.results)?)
    })
}

/// Runs every integrity invariant, writing the JSON report
/// `[{invariant, pass, offenders}]` to `*out_json` and the overall verdict
/// to `*out_passed` when non-null.
///
/// # Safety
/// `handle` is live; `out_json` is writable; `out_passed` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn vstash_check_json(
    handle: *const VstashStore,
    out_json: *mut *mut c_char,
    out_passed: *mut bool,
) -> VstashStatus {
    guard(|| {
        let h = handle_ref(handle)?;
        let report = h.store.integrity_check()?;
        out_string(out_json, serde_json::to_string(&report.results)?)?;
        if !out_passed.is_null() {
            *out_passed = report.passed();
        }
        Ok(())
    })
}

/// Writes the text of one chunk to `*out_text`.
///
/// # Safety
/// `handle` is live; `out_text` is writable.
#[no_mangle]
pub unsafe extern "C" fn vstash_get_chunk_text(
    handle: *const VstashStore,
    chunk_id: i64,
    out_text: *mut *mut c_char,
) -> VstashStatus {
    guard(|| {
        let h = handle_ref(handle)?;
        let chunk = h.store.get_chunk(chunk_id)?;
        out_string(out_text, chunk.text)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vstash_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
