//! C interface to the sedetect pipeline.
//!
//! Records cross the boundary as UTF-8 JSON (single records) or JSON lines
//! (record lists) in the same formats as the pipeline files. Every function
//! returns a [`SedStatus`]; on failure [`sed_last_error`] describes the
//! error for the calling thread. Strings returned through `out` pointers
//! belong to the caller and must be released with [`sed_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sedetect::aggregator::{decode_mentions, ExtractedMention, PredictionRecord};
use sedetect::encoder::{EncodedChunk, Encoder, EncoderConfig};
use sedetect::labeler::{gold_token_labels, LabelMode};
use sedetect::scorer::ScoreAccumulator;
use sedetect::wikitext::{parse_page_with, ParserConfig, RawPage};
use sedetect::{jsonl, Error, Listing};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidConfig = 4,
    InvalidInput = 5,
    Misaligned = 6,
    DuplicateMention = 7,
    Internal = 8,
}

/// Gold labels to attach while encoding.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SedLabelMode {
    None = 0,
    Typed = 1,
    Binary = 2,
}

/// Opaque encoder handle.
pub struct SedEncoder {
    inner: Encoder,
}

/// Opaque accumulator of scoring counts.
pub struct SedScorer {
    inner: ScoreAccumulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SedStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Json { .. } => SedStatus::InvalidJson,
            Error::InvalidConfig(_) => SedStatus::InvalidConfig,
            Error::Misaligned { .. } => SedStatus::Misaligned,
            Error::DuplicateMention { .. } => SedStatus::DuplicateMention,
            _ => SedStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SedStatus::InvalidJson, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SedStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SedStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SedStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SedStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(SedStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(SedStatus::Internal, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(SedStatus::NullPointer, "out is null".into()))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sed_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sed_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses one page; `*out` receives its listings as JSON lines.
///
/// # Safety
/// `title` and `wikitext` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sed_parse_page(
    title: *const c_char,
    wikitext: *const c_char,
    min_items: usize,
    out: *mut *mut c_char,
) -> SedStatus {
    guard(|| {
        check_out(out)?;
        let page = RawPage {
            title: str_arg(title, "title")?.to_owned(),
            wikitext: str_arg(wikitext, "wikitext")?.to_owned(),
        };
        let parsed = parse_page_with(&page, &ParserConfig { min_items });
        put_string(out, jsonl::to_string(&parsed.listings))
    })
}

/// Creates an encoder from a JSON encoder config; NULL uses the defaults.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sed_encoder_new(config_json: *const c_char, out: *mut *mut SedEncoder) -> SedStatus {
    guard(|| {
        check_out(out)?;
        let config: EncoderConfig = if config_json.is_null() {
            EncoderConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)?
        };
        let inner = Encoder::new(config)?;
        *out = Box::into_raw(Box::new(SedEncoder { inner }));
        Ok(())
    })
}

/// Encodes one listing (JSON); `*out` receives its chunks as JSON lines.
///
/// # Safety
/// `encoder` must be a live handle; `listing_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sed_encoder_encode(
    encoder: *const SedEncoder,
    listing_json: *const c_char,
    labels: SedLabelMode,
    out: *mut *mut c_char,
) -> SedStatus {
    guard(|| {
        check_out(out)?;
        let enc = encoder
            .as_ref()
            .ok_or_else(|| Failure(SedStatus::NullPointer, "encoder is null".into()))?;
        let listing: Listing = serde_json::from_str(str_arg(listing_json, "listing_json")?)?;
        let mut chunked = enc.inner.chunk_listing(&listing);
        let mode = match labels {
            SedLabelMode::None => None,
            SedLabelMode::Typed => Some(LabelMode::Typed),
            SedLabelMode::Binary => Some(LabelMode::Binary),
        };
        if let Some(mode) = mode {
            for c in &mut chunked.chunks {
                c.labels = Some(gold_token_labels(c, &listing, mode)?);
            }
        }
        put_string(out, jsonl::to_string(&chunked.chunks))
    })
}

/// # Safety
/// `encoder` must be NULL or a handle from [`sed_encoder_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sed_encoder_free(encoder: *mut SedEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Decodes one chunk with its prediction (both JSON); `*out` receives the
/// mentions as JSON lines.
///
/// # Safety
/// Both inputs must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sed_decode_mentions(
    chunk_json: *const c_char,
    prediction_json: *const c_char,
    out: *mut *mut c_char,
) -> SedStatus {
    guard(|| {
        check_out(out)?;
        let chunk: EncodedChunk = serde_json::from_str(str_arg(chunk_json, "chunk_json")?)?;
        let pred: PredictionRecord = serde_json::from_str(str_arg(prediction_json, "prediction_json")?)?;
        let decoded = decode_mentions(&chunk, &pred)?;
        put_string(out, jsonl::to_string(&decoded.mentions))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sed_scorer_new(out: *mut *mut SedScorer) -> SedStatus {
    guard(|| {
        check_out(out)?;
        *out = Box::into_raw(Box::new(SedScorer {
            inner: ScoreAccumulator::default(),
        }));
        Ok(())
    })
}

fn parse_mentions(text: &str, what: &str) -> Result<Vec<ExtractedMention>, Failure> {
    jsonl::from_reader(text.as_bytes(), std::path::Path::new(what)).map_err(Failure::from)
}

/// Adds gold and predicted mentions (JSON lines) of one batch of listings.
/// Nothing is added when the call fails.
///
/// # Safety
/// `scorer` must be a live handle; inputs must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sed_scorer_add(
    scorer: *mut SedScorer,
    gold_jsonl: *const c_char,
    pred_jsonl: *const c_char,
) -> SedStatus {
    guard(|| {
        let s = scorer
            .as_mut()
            .ok_or_else(|| Failure(SedStatus::NullPointer, "scorer is null".into()))?;
        let gold = parse_mentions(str_arg(gold_jsonl, "gold_jsonl")?, "gold")?;
        let pred = parse_mentions(str_arg(pred_jsonl, "pred_jsonl")?, "pred")?;
        let mut batch = ScoreAccumulator::default();
        batch.add(&gold, &pred)?;
        s.inner.merge(&batch);
        Ok(())
    })
}

/// Writes the report so far as JSON to `*out`.
///
/// # Safety
/// `scorer` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sed_scorer_report(scorer: *const SedScorer, out: *mut *mut c_char) -> SedStatus {
    guard(|| {
        check_out(out)?;
        let s = scorer
            .as_ref()
            .ok_or_else(|| Failure(SedStatus::NullPointer, "scorer is null".into()))?;
        put_string(out, serde_json::to_string(&s.inner.report())?)
    })
}

/// # Safety
/// `scorer` must be NULL or a handle from [`sed_scorer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sed_scorer_free(scorer: *mut SedScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn sed_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
