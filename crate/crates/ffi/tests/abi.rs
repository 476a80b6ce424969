use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use vstash::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { vstash_string_free(s) };
    out
}

fn last_error() -> String {
    let p = vstash_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn open(path: &std::path::Path) -> *mut VstashStore {
    let mut h = ptr::null_mut();
    let path = c(path.to_str().unwrap());
    let st = unsafe { vstash_open(path.as_ptr(), true, c("test:32").as_ptr(), &mut h) };
    assert_eq!(st, VstashStatus::Ok);
    h
}

#[test]
fn add_search_fetch_and_check() {
    let dir = tempfile::TempDir::new().unwrap();
    let h = open(&dir.path().join("s.db"));
    let mut doc = 0i64;
    let st = unsafe {
        vstash_add_text(h, c("a.md").as_ptr(), ptr::null(), c("lexical search with inverted indexes").as_ptr(), &mut doc)
    };
    assert_eq!(st, VstashStatus::Ok);
    assert!(doc > 0);

    let mut json = ptr::null_mut();
    let st = unsafe { vstash_search_json(h, c("inverted").as_ptr(), 5, c("fts").as_ptr(), &mut json) };
    assert_eq!(st, VstashStatus::Ok);
    let results: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    let first = &results[0];
    for key in ["chunk_id", "doc_id", "score", "tier", "context", "diagnostics"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let chunk_id = first["chunk_id"].as_i64().unwrap();

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { vstash_get_chunk_text(h, chunk_id, &mut text) }, VstashStatus::Ok);
    assert_eq!(take(text), "lexical search with inverted indexes");

    let mut passed = false;
    assert_eq!(unsafe { vstash_check_json(h, &mut json, &mut passed) }, VstashStatus::Ok);
    assert!(passed);
    let report: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 5);
    unsafe { vstash_close(h) };
}

#[test]
fn failures_map_to_status_codes() {
    let dir = tempfile::TempDir::new().unwrap();
    let mut h = ptr::null_mut();
    let missing = c(dir.path().join("none.db").to_str().unwrap());
    assert_eq!(unsafe { vstash_open(missing.as_ptr(), false, ptr::null(), &mut h) }, VstashStatus::NotFound);
    assert!(last_error().contains("not found"));
    assert!(h.is_null());
    assert_eq!(unsafe { vstash_open(ptr::null(), true, ptr::null(), &mut h) }, VstashStatus::NullArgument);

    let h = open(&dir.path().join("s.db"));
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { vstash_search_json(h, c("x").as_ptr(), 3, ptr::null(), &mut json) }, VstashStatus::EmptyStore);
    assert_eq!(
        unsafe { vstash_search_json(h, c("x").as_ptr(), 3, c("sideways").as_ptr(), &mut json) },
        VstashStatus::InvalidArgument
    );
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { vstash_search_json(h, bad.as_ptr().cast(), 3, ptr::null(), &mut json) },
        VstashStatus::InvalidUtf8
    );
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { vstash_get_chunk_text(h, 42, &mut text) }, VstashStatus::NotFound);
    assert_eq!(unsafe { vstash_get_chunk_text(ptr::null(), 42, &mut text) }, VstashStatus::NullArgument);
    unsafe {
        vstash_close(h);
        vstash_close(ptr::null_mut());
        vstash_string_free(ptr::null_mut());
    }
}

#[test]
fn last_error_clears_on_success() {
    let dir = tempfile::TempDir::new().unwrap();
    let h = open(&dir.path().join("s.db"));
    let mut text = ptr::null_mut();
    unsafe { vstash_get_chunk_text(h, 1, &mut text) };
    assert!(!vstash_last_error().is_null());
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { vstash_check_json(h, &mut json, ptr::null_mut()) }, VstashStatus::Ok);
    take(json);
    assert!(vstash_last_error().is_null());
    let v = unsafe { CStr::from_ptr(vstash_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    unsafe { vstash_close(h) };
}

/// Compiles the C smoke program against the generated header and the
/// static library. Skipped when no C compiler is installed.
#[test]
fn c_program_links_against_header_and_staticlib() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libvstash.a");
    assert!(lib.is_file(), "static library not built at {}", lib.display());
    let dir = tempfile::TempDir::new().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).arg(dir.path().join("c.db")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
