use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use serde_json::Value;
use sibyl_core::dataio::write_demo_corpus;
use sibyl_core::engine::{ContributionQuery, ContributionView, EngineConfig};
use sibyl_core::Engine;
use sibyl_ffi::*;

struct Handle(*mut SibylEngine);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { sibyl_engine_free(self.0) }
    }
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = sibyl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn take(p: *mut c_char) -> Value {
    let text = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { sibyl_string_free(p) };
    serde_json::from_str(&text).unwrap()
}

fn open(dir: &Path, review: bool) -> Handle {
    let mut h = ptr::null_mut();
    let st = unsafe { sibyl_engine_open_dir(c(dir.to_str().unwrap()).as_ptr(), review, &mut h) };
    assert_eq!(st, SibylStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    Handle(h)
}

fn corpus() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_demo_corpus(dir.path(), 120, 12, 5).unwrap();
    dir
}

#[test]
fn payloads_match_the_engine() {
    let dir = corpus();
    let h = open(dir.path(), true);
    let engine = Engine::open(
        &sibyl_core::dataio::DataPaths::in_dir(dir.path()),
        EngineConfig { review_mode: true, ..Default::default() },
    )
    .unwrap();
    let id = c("C00007");

    let mut n = 0usize;
    assert_eq!(unsafe { sibyl_case_count(h.0, &mut n) }, SibylStatus::Ok);
    assert_eq!(n, 120);

    let (mut score, mut raw) = (0u8, 0.0f64);
    assert_eq!(unsafe { sibyl_case_score(h.0, id.as_ptr(), &mut score, &mut raw) }, SibylStatus::Ok);
    assert_eq!(score, engine.score_of("C00007").unwrap().get());
    assert_eq!(raw, engine.raw_of("C00007").unwrap());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sibyl_contributions_json(h.0, id.as_ptr(), c("split").as_ptr(), &mut out) }, SibylStatus::Ok);
    let q = ContributionQuery { view: ContributionView::Split, ..Default::default() };
    assert_eq!(take(out), serde_json::to_value(engine.contributions("C00007", &q).unwrap()).unwrap());

    assert_eq!(unsafe { sibyl_contributions_json(h.0, id.as_ptr(), ptr::null(), &mut out) }, SibylStatus::Ok);
    assert!(take(out)["rows"].as_array().unwrap().len() <= 10);

    assert_eq!(unsafe { sibyl_importance_json(h.0, &mut out) }, SibylStatus::Ok);
    assert_eq!(take(out), serde_json::to_value(engine.importance()).unwrap());

    assert_eq!(unsafe { sibyl_model_json(h.0, &mut out) }, SibylStatus::Ok);
    assert_eq!(take(out)["score_max"], 20);

    assert_eq!(unsafe { sibyl_flips_json(h.0, id.as_ptr(), &mut out) }, SibylStatus::Ok);
    assert_eq!(take(out), serde_json::to_value(engine.flips("C00007").unwrap()).unwrap());

    assert_eq!(unsafe { sibyl_distributions_json(h.0, 10, &mut out) }, SibylStatus::Ok);
    assert!(take(out)["slice"]["case_count"].as_u64().is_some());

    assert_eq!(unsafe { sibyl_similar_json(h.0, id.as_ptr(), 0, &mut out) }, SibylStatus::Ok);
    assert_eq!(take(out)["neighbors"].as_array().unwrap().len(), 3);

    let req = c(r#"{"changes":[{"factor":"AGE OF CHILD GROUP","value":"<1"}]}"#);
    assert_eq!(unsafe { sibyl_whatif_json(h.0, id.as_ptr(), req.as_ptr(), &mut out) }, SibylStatus::Ok);
    let v = take(out);
    assert!(v["new_score"].as_u64().unwrap() >= 1);
}

#[test]
fn errors_carry_status_and_message() {
    let dir = corpus();
    let h = open(dir.path(), false);
    let mut out = ptr::null_mut();

    let missing = c("nope");
    let (mut score, mut raw) = (0u8, 0.0f64);
    assert_eq!(unsafe { sibyl_case_score(h.0, missing.as_ptr(), &mut score, &mut raw) }, SibylStatus::CaseNotFound);
    assert!(last_error().starts_with("CASE_NOT_FOUND"));

    let id = c("C00001");
    assert_eq!(unsafe { sibyl_similar_json(h.0, id.as_ptr(), 3, &mut out) }, SibylStatus::FeatureDisabled);
    assert_eq!(unsafe { sibyl_distributions_json(h.0, 21, &mut out) }, SibylStatus::InvalidInput);
    assert_eq!(unsafe { sibyl_contributions_json(h.0, id.as_ptr(), c("sideways").as_ptr(), &mut out) }, SibylStatus::InvalidInput);

    let five = c(r#"{"changes":[{"factor":"a","value":1},{"factor":"b","value":1},{"factor":"c","value":1},{"factor":"d","value":1},{"factor":"e","value":1}]}"#);
    assert_eq!(unsafe { sibyl_whatif_json(h.0, id.as_ptr(), five.as_ptr(), &mut out) }, SibylStatus::TooManyChanges);
    let bad = c(r#"{"changes":[{"factor":"NO SUCH FACTOR","value":1}]}"#);
    assert_eq!(unsafe { sibyl_whatif_json(h.0, id.as_ptr(), bad.as_ptr(), &mut out) }, SibylStatus::InvalidChange);
    assert_eq!(unsafe { sibyl_whatif_json(h.0, id.as_ptr(), c("not json").as_ptr(), &mut out) }, SibylStatus::InvalidInput);

    assert_eq!(unsafe { sibyl_case_score(ptr::null(), id.as_ptr(), &mut score, &mut raw) }, SibylStatus::NullArgument);
    assert_eq!(unsafe { sibyl_case_score(h.0, ptr::null(), &mut score, &mut raw) }, SibylStatus::NullArgument);
    assert_eq!(unsafe { sibyl_model_json(h.0, ptr::null_mut()) }, SibylStatus::NullArgument);

    let bytes = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { sibyl_case_score(h.0, bytes.as_ptr().cast(), &mut score, &mut raw) },
        SibylStatus::InvalidUtf8
    );

    assert_eq!(unsafe { sibyl_model_json(h.0, &mut out) }, SibylStatus::Ok);
    assert!(sibyl_last_error_message().is_null());
    unsafe { sibyl_string_free(out) };
}

#[test]
fn open_failures() {
    let dir = corpus();
    std::fs::write(dir.path().join("outcomes.csv"), "case_id,removed\nC00001,7\n").unwrap();
    let mut h = ptr::null_mut();
    let st = unsafe { sibyl_engine_open_dir(c(dir.path().to_str().unwrap()).as_ptr(), false, &mut h) };
    assert_eq!(st, SibylStatus::ValidationFailed);
    assert!(h.is_null());
    assert!(last_error().contains("must be 0 or 1"));

    let p = c("/definitely/not/here");
    let st = unsafe { sibyl_engine_open(p.as_ptr(), p.as_ptr(), p.as_ptr(), p.as_ptr(), p.as_ptr(), false, &mut h) };
    assert_eq!(st, SibylStatus::ValidationFailed);
    assert_eq!(unsafe { sibyl_engine_open_dir(ptr::null(), false, &mut h) }, SibylStatus::NullArgument);
    unsafe { sibyl_engine_free(ptr::null_mut()) };
    let v = unsafe { CStr::from_ptr(sibyl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let lib = target_dir();
    let so = lib.join(if cfg!(target_os = "macos") { "libsibyl_ffi.dylib" } else { "libsibyl_ffi.so" });
    let has_cc = Command::new("cc").arg("--version").output().is_ok();
    if !cfg!(unix) || !has_cc || !so.exists() {
        eprintln!("skipping: no C compiler or shared library at {}", so.display());
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let work = tempfile::tempdir().unwrap();
    let exe = work.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-L")
        .arg(&lib)
        .arg("-lsibyl_ffi")
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let dir = corpus();
    let out = Command::new(&exe).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cases=120"), "{stdout}");
    assert!(stdout.contains("risk=1"), "{stdout}");
}
