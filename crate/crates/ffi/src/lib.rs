//! C ABI for extsum.
//!
//! Every fallible function returns an [`ExtsumStatus`]; on failure the
//! message is available from [`extsum_last_error`] on the same thread.
//! Strings returned through `out` pointers are owned by the caller and must
//! be released with [`extsum_string_free`]. Documents are passed as one
//! corpus JSONL record (a single JSON object).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use extsum::corpus::{detokenize, parse_corpus, tokenize, Document, LoadOptions};
use extsum::model::{Model, ModelError};
use extsum::numerics::NumericsError;
use extsum::oracle::{greedy_label, LabelRecord, OracleConfig};
use extsum::rouge::rouge_l_sentence;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtsumStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Checkpoint = 5,
    Panic = 6,
}

/// A loaded model. Opaque to C callers.
pub struct ExtsumModel {
    model: Model,
}

/// Sentence-level ROUGE-L between two tokenized texts.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExtsumRouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(ExtsumStatus, String);

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure(ExtsumStatus::InvalidInput, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match &e {
            ModelError::Io { .. } => ExtsumStatus::Io,
            ModelError::CheckpointMismatch(_)
            | ModelError::Numerics(
                NumericsError::Checkpoint(_) | NumericsError::ChecksumMismatch { .. } | NumericsError::UnsupportedVersion(_),
            ) => ExtsumStatus::Checkpoint,
            _ => ExtsumStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ExtsumStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(Failure(ExtsumStatus::Panic, format!("internal error: {}", msg.unwrap_or_default())))
    });
    match outcome {
        Ok(()) => {
            set_last_error("");
            ExtsumStatus::Ok
        }
        Err(Failure(status, message)) => {
            set_last_error(&message);
            status
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ExtsumStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ExtsumStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn single_document(json: &str) -> Result<Document, Failure> {
    let line = json.trim();
    if line.contains('\n') {
        return Err(Failure::input("document must be a single JSON object"));
    }
    let mut docs = parse_corpus(line, &LoadOptions::default()).map_err(Failure::input)?;
    match docs.len() {
        1 => Ok(docs.remove(0)),
        _ => Err(Failure::input("document must be a single JSON object")),
    }
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ExtsumStatus::NullArgument, "out is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure::input("output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn extsum_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next extsum call on the same thread.
#[no_mangle]
pub extern "C" fn extsum_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn extsum_model_load(path: *const c_char, out: *mut *mut ExtsumModel) -> ExtsumStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(Failure(ExtsumStatus::NullArgument, "out is null".into()));
        }
        let model = Model::load(Path::new(path), None)?;
        *out = Box::into_raw(Box::new(ExtsumModel { model }));
        Ok(())
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `bytes` points to `len` readable bytes; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn extsum_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut ExtsumModel) -> ExtsumStatus {
    guard(|| {
        if bytes.is_null() || out.is_null() {
            return Err(Failure(ExtsumStatus::NullArgument, "bytes and out must be non-null".into()));
        }
        let model = Model::from_bytes(std::slice::from_raw_parts(bytes, len), None)?;
        *out = Box::into_raw(Box::new(ExtsumModel { model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` is null or came from a load function and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn extsum_model_free(model: *mut ExtsumModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores every sentence of `document_json` and selects the `k` most
/// probable, in document order. Writes
/// `{"id", "selected", "sentences", "probabilities"}` as JSON to `out`.
///
/// # Safety
/// `model` came from a load function; `document_json` is a NUL-terminated
/// string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn extsum_summarize(model: *const ExtsumModel, document_json: *const c_char, k: usize, out: *mut *mut c_char) -> ExtsumStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| Failure(ExtsumStatus::NullArgument, "model is null".into()))?;
        let doc = single_document(text(document_json, "document_json")?)?;
        let (selected, probabilities) = model.model.summarize(&doc, k)?;
        let sentences: Vec<String> = selected.iter().map(|&i| detokenize(&doc.sentences[i].tokens)).collect();
        let json = serde_json::json!({ "id": doc.id, "selected": selected, "sentences": sentences, "probabilities": probabilities });
        write_string(out, json.to_string())
    })
}

/// Greedy oracle labels for `document_json` against its highlights, with
/// at most `cap` positives. Writes `{"id", "labels", "trace"}` to `out`.
///
/// # Safety
/// `document_json` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn extsum_label_document(document_json: *const c_char, cap: usize, out: *mut *mut c_char) -> ExtsumStatus {
    guard(|| {
        let doc = single_document(text(document_json, "document_json")?)?;
        if cap == 0 {
            return Err(Failure::input("cap must be at least 1"));
        }
        let labeled = greedy_label(&doc, &OracleConfig { cap, ..OracleConfig::default() }).map_err(Failure::input)?;
        let record = serde_json::to_string(&LabelRecord::from(&labeled)).map_err(Failure::input)?;
        write_string(out, record)
    })
}

/// Tokenizes both texts and computes ROUGE-L precision, recall and F1.
///
/// # Safety
/// Both texts are NUL-terminated strings; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn extsum_rouge_l(candidate: *const c_char, reference: *const c_char, out: *mut ExtsumRouge) -> ExtsumStatus {
    guard(|| {
        let candidate = tokenize(text(candidate, "candidate")?);
        let reference = tokenize(text(reference, "reference")?);
        let out = out.as_mut().ok_or_else(|| Failure(ExtsumStatus::NullArgument, "out is null".into()))?;
        let s = rouge_l_sentence(&candidate, &reference).map_err(Failure::input)?;
        *out = ExtsumRouge { precision: s.precision, recall: s.recall, f1: s.f1 };
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn extsum_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
