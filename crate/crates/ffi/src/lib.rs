//! C ABI over the genrank library.
//!
//! Every fallible function returns a [`GenrankStatus`]; on anything other
//! than `GENRANK_STATUS_OK` a description is available from
//! [`genrank_last_error_message`] on the same thread. Strings handed out by
//! this library must be released with [`genrank_string_free`], index handles
//! with [`genrank_index_free`]. Panics never cross the boundary; they are
//! reported as `GENRANK_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use genrank::eval::mean_ndcg;
use genrank::index::{
    load_index, parse_jsonl_corpus, parse_tsv_corpus, save_index, tokenize, Bm25Params, InvertedIndex,
};
use genrank::rerank::parse_permutation;
use genrank::trec::{parse_qrels, parse_queries_tsv, parse_trec_run, write_trec_run};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenrankStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed corpus, run, qrels or parameters.
    InvalidInput = 3,
    Io = 4,
    /// The caller's buffer is too small; the required length was written.
    BufferTooSmall = 5,
    /// No query could be evaluated (no positively graded judgments).
    NotEvaluable = 6,
    /// The model response contained no integers.
    Unparseable = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenrankCorpusFormat {
    /// One `{"id": ..., "text": ..., "title": ...}` object per line.
    Jsonl = 0,
    /// `id<TAB>text` per line.
    Tsv = 1,
}

/// Opaque handle to a built BM25 index.
pub struct GenrankIndex {
    inner: InvertedIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(GenrankStatus, String);

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self(GenrankStatus::InvalidInput, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

/// Runs `f`, converting failures and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult) -> GenrankStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GenrankStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GenrankStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(GenrankStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure(GenrankStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure(GenrankStatus::NullArgument, format!("{name} is null")))
}

unsafe fn index_arg<'a>(ptr: *const GenrankIndex) -> Result<&'a InvertedIndex, Failure> {
    ptr.as_ref().map(|h| &h.inner).ok_or_else(|| Failure(GenrankStatus::NullArgument, "index is null".into()))
}

fn params(k1: f64, b: f64) -> Result<Bm25Params, Failure> {
    Bm25Params::new(k1, b).map_err(Failure::input)
}

fn into_c_string(text: String) -> Result<*mut c_char, Failure> {
    CString::new(text).map(CString::into_raw).map_err(|_| Failure::input("output contains a NUL byte"))
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next genrank call on this thread.
#[no_mangle]
pub extern "C" fn genrank_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn genrank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn genrank_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds an index from corpus text held in memory.
#[no_mangle]
pub unsafe extern "C" fn genrank_index_build(
    corpus: *const c_char,
    format: GenrankCorpusFormat,
    out: *mut *mut GenrankIndex,
) -> GenrankStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(corpus, "corpus")?;
        let docs = match format {
            GenrankCorpusFormat::Jsonl => parse_jsonl_corpus(text),
            GenrankCorpusFormat::Tsv => parse_tsv_corpus(text),
        }
        .map_err(Failure::input)?;
        let inner = InvertedIndex::build(docs).map_err(Failure::input)?;
        *out = Box::into_raw(Box::new(GenrankIndex { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn genrank_index_load(path: *const c_char, out: *mut *mut GenrankIndex) -> GenrankStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = load_index(Path::new(path)).map_err(|e| match e {
            genrank::index::IndexError::Io(_) => Failure(GenrankStatus::Io, e.to_string()),
            other => Failure::input(other),
        })?;
        *out = Box::into_raw(Box::new(GenrankIndex { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn genrank_index_save(index: *const GenrankIndex, path: *const c_char) -> GenrankStatus {
    guard(|| {
        let index = index_arg(index)?;
        let path = str_arg(path, "path")?;
        save_index(index, Path::new(path)).map_err(|e| Failure(GenrankStatus::Io, e.to_string()))
    })
}

/// Releases an index handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn genrank_index_free(index: *mut GenrankIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of documents, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn genrank_index_num_docs(index: *const GenrankIndex) -> usize {
    index.as_ref().map_or(0, |h| h.inner.num_docs())
}

/// BM25 score of one document for a free-text query.
#[no_mangle]
pub unsafe extern "C" fn genrank_index_bm25_score(
    index: *const GenrankIndex,
    query: *const c_char,
    doc_id: *const c_char,
    k1: f64,
    b: f64,
    out: *mut f64,
) -> GenrankStatus {
    guard(|| {
        let index = index_arg(index)?;
        let out = out_arg(out, "out")?;
        let terms = tokenize(str_arg(query, "query")?);
        let doc = str_arg(doc_id, "doc_id")?;
        *out = index.bm25_score(params(k1, b)?, &terms, doc).map_err(Failure::input)?;
        Ok(())
    })
}

/// Retrieves the top `k` documents for every query of a `qid<TAB>text`
/// topics string and returns a TREC run. Free the result with
/// `genrank_string_free`.
#[no_mangle]
pub unsafe extern "C" fn genrank_index_retrieve(
    index: *const GenrankIndex,
    queries_tsv: *const c_char,
    k: usize,
    k1: f64,
    b: f64,
    run_tag: *const c_char,
    out_run: *mut *mut c_char,
) -> GenrankStatus {
    guard(|| {
        let index = index_arg(index)?;
        let out = out_arg(out_run, "out_run")?;
        let queries = parse_queries_tsv(str_arg(queries_tsv, "queries_tsv")?).map_err(Failure::input)?;
        let tag = str_arg(run_tag, "run_tag")?;
        if k == 0 {
            return Err(Failure::input("k must be at least 1"));
        }
        let p = params(k1, b)?;
        let rankings: Vec<_> = queries.iter().map(|q| index.retrieve(p, q, k)).collect();
        *out = into_c_string(write_trec_run(&rankings, tag).map_err(Failure::input)?)?;
        Ok(())
    })
}

/// Mean nDCG@k of a TREC run against qrels, both given as text. Returns
/// `GENRANK_STATUS_NOT_EVALUABLE` when no query has a positively graded judgment.
#[no_mangle]
pub unsafe extern "C" fn genrank_ndcg_mean(
    run_text: *const c_char,
    qrels_text: *const c_char,
    k: usize,
    out: *mut f64,
) -> GenrankStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let run = parse_trec_run(str_arg(run_text, "run_text")?).map_err(Failure::input)?;
        let qrels = parse_qrels(str_arg(qrels_text, "qrels_text")?).map_err(Failure::input)?;
        let result = mean_ndcg(&run, &qrels, k).map_err(Failure::input)?;
        *out = result
            .mean
            .ok_or_else(|| Failure(GenrankStatus::NotEvaluable, "no query has relevant judgments".into()))?;
        Ok(())
    })
}

/// Parses a listwise model answer into a full permutation of
/// `1..=window_len`, written to `out` (capacity `out_cap`). The permutation
/// length is always written to `out_len`, also when the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn genrank_parse_permutation(
    response: *const c_char,
    window_len: usize,
    out: *mut usize,
    out_cap: usize,
    out_len: *mut usize,
) -> GenrankStatus {
    guard(|| {
        let len = out_arg(out_len, "out_len")?;
        let text = str_arg(response, "response")?;
        if window_len == 0 {
            return Err(Failure::input("window_len must be at least 1"));
        }
        let parsed =
            parse_permutation(text, window_len).map_err(|e| Failure(GenrankStatus::Unparseable, e.to_string()))?;
        *len = parsed.order.len();
        if out_cap < parsed.order.len() {
            return Err(Failure(
                GenrankStatus::BufferTooSmall,
                format!("need room for {} entries", parsed.order.len()),
            ));
        }
        if out.is_null() {
            return Err(Failure(GenrankStatus::NullArgument, "out is null".into()));
        }
        std::slice::from_raw_parts_mut(out, parsed.order.len()).copy_from_slice(&parsed.order);
        Ok(())
    })
}
