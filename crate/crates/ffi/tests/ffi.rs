use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use extsum::corpus::{parse_corpus, LoadOptions};
use extsum::model::{EncoderKind, ExtractorConfig, Model};
use extsum_ffi::*;

const DOC: &str = r#"{"id": "d1", "title": "Graph methods", "highlights": ["graph methods scale well"], "sections": [{"title": "Introduction", "sentences": ["We study graph methods.", "The weather was pleasant.", "Graph methods scale well in practice.", "Results are shown below.", "We thank the reviewers."]}]}"#;

fn small_model() -> Model {
    let docs = parse_corpus(DOC, &LoadOptions::default()).unwrap();
    let config = ExtractorConfig { encoder_kind: EncoderKind::Mean, embed_dim: 8, encoder_out: 8, extractor_hidden: 6, mlp_hidden: 6, ..ExtractorConfig::default() };
    Model::for_documents(config, &docs, None, 3).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(extsum_last_error()) }.to_str().unwrap().to_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> serde_json::Value {
    let v = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
    extsum_string_free(s);
    v
}

fn load(path: &Path) -> (ExtsumStatus, *mut ExtsumModel) {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { extsum_model_load(c.as_ptr(), &mut handle) };
    (status, handle)
}

#[test]
fn summarize_through_a_loaded_handle_matches_the_library() {
    let model = small_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let (status, handle) = load(&path);
    assert_eq!(status, ExtsumStatus::Ok, "{}", last_error());

    let doc = CString::new(DOC).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { extsum_summarize(handle, doc.as_ptr(), 2, &mut out) };
    assert_eq!(status, ExtsumStatus::Ok, "{}", last_error());
    let v = unsafe { take(out) };
    let expected = model.summarize(&parse_corpus(DOC, &LoadOptions::default()).unwrap()[0], 2).unwrap();
    let selected: Vec<usize> = serde_json::from_value(v["selected"].clone()).unwrap();
    let probabilities: Vec<f64> = serde_json::from_value(v["probabilities"].clone()).unwrap();
    assert_eq!(selected, expected.0);
    assert_eq!(probabilities, expected.1);
    assert_eq!(v["sentences"].as_array().unwrap().len(), 2);
    unsafe { extsum_model_free(handle) };
}

#[test]
fn models_load_from_memory() {
    let bytes = small_model().to_bytes().unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { extsum_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut handle) }, ExtsumStatus::Ok);
    unsafe { extsum_model_free(handle) };

    let mut corrupted = bytes.clone();
    let last = corrupted.len() - 10;
    corrupted[last] ^= 1;
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { extsum_model_from_bytes(corrupted.as_ptr(), corrupted.len(), &mut handle) }, ExtsumStatus::Checkpoint);
    assert!(handle.is_null());
    assert!(last_error().contains("checksum"), "{}", last_error());
}

#[test]
fn failures_report_codes_and_messages() {
    let (status, handle) = load(Path::new("/nonexistent/model.ckpt"));
    assert_eq!(status, ExtsumStatus::Io);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { extsum_label_document(ptr::null(), 3, &mut out) }, ExtsumStatus::NullArgument);
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { extsum_label_document(bad.as_ptr(), 3, &mut out) }, ExtsumStatus::InvalidInput);
    assert!(out.is_null());
    let invalid = [0xffu8, 0xfe, 0];
    let status = unsafe { extsum_label_document(invalid.as_ptr().cast(), 3, &mut out) };
    assert_eq!(status, ExtsumStatus::InvalidUtf8);

    let doc = CString::new(DOC).unwrap();
    assert_eq!(unsafe { extsum_summarize(ptr::null(), doc.as_ptr(), 4, &mut out) }, ExtsumStatus::NullArgument);
    assert_eq!(unsafe { extsum_label_document(doc.as_ptr(), 2, &mut out) }, ExtsumStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { extsum_string_free(out) };
}

#[test]
fn labels_and_rouge_match_the_library() {
    let doc = CString::new(DOC).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { extsum_label_document(doc.as_ptr(), 1, &mut out) }, ExtsumStatus::Ok);
    let v = unsafe { take(out) };
    assert_eq!(v["id"], "d1");
    assert_eq!(v["labels"], serde_json::json!([0, 0, 1, 0, 0]));

    let (c, r) = (CString::new("the cat sat").unwrap(), CString::new("the cat sat down").unwrap());
    let mut score = ExtsumRouge::default();
    assert_eq!(unsafe { extsum_rouge_l(c.as_ptr(), r.as_ptr(), &mut score) }, ExtsumStatus::Ok);
    assert_eq!((score.precision, score.recall), (1.0, 0.75));
    assert!((score.f1 - 6.0 / 7.0).abs() < 1e-12);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(extsum_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn static_library() -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let lib = deps.parent()?.join("libextsum_ffi.a");
    lib.is_file().then_some(lib)
}

/// Compiles the C smoke test against the generated header and the static
/// library. Skipped when no C compiler is installed.
#[test]
fn c_program_links_against_the_header() {
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&compiler).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let lib = static_library().expect("static library next to the test binary");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&compiler)
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");

    let ckpt = dir.path().join("m.ckpt");
    small_model().save(&ckpt).unwrap();
    let out = Command::new(&exe).arg(&ckpt).arg(DOC).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("\"selected\""), "{stdout}");
}
