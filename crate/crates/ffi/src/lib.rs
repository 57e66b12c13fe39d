//! C ABI for kiwi-core.
//!
//! Every fallible function returns a [`KiwiStatus`] and writes its result
//! through an out-pointer. On failure, [`kiwi_last_error`] describes what
//! went wrong on the calling thread. Handles returned through `**out`
//! parameters are owned by the caller and released with the matching
//! `*_free` function. Panics never cross the boundary; they surface as
//! `KIWI_STATUS_PANIC`.
//!
//! Sentences are passed as UTF-8, whitespace-tokenized C strings; tags are
//! bytes, 0 for OK and 1 for BAD.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kiwi::data::{parse_alignments, QeSample, SentenceTriplet};
use kiwi::labels::label_triplet;
use kiwi::metrics::{f1_mult, pearson, spearman, MetricError};
use kiwi::trainer::LoadedModel;
use kiwi::{Stream, Tag};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KiwiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Input lengths disagree.
    LengthMismatch = 4,
    /// The value does not exist for these inputs (for example Pearson of a
    /// constant series, or a sentence score from a word-only model).
    Undefined = 5,
    /// A model could not be loaded or run.
    Model = 6,
    /// The caller's buffer is too small; the required size was written.
    BufferTooSmall = 7,
    Panic = 99,
}

/// Output stream of a word-level prediction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KiwiStream {
    Mt = 0,
    Gap = 1,
    Source = 2,
    /// The model only scores sentences.
    None = 3,
}

impl From<Option<Stream>> for KiwiStream {
    fn from(s: Option<Stream>) -> Self {
        match s {
            Some(Stream::Mt) => KiwiStream::Mt,
            Some(Stream::Gap) => KiwiStream::Gap,
            Some(Stream::Source) => KiwiStream::Source,
            None => KiwiStream::None,
        }
    }
}

/// A loaded model (neural or stacked).
pub struct KiwiModel {
    inner: LoadedModel,
}

/// Output of [`kiwi_model_predict`] for one sentence.
pub struct KiwiPrediction {
    stream: Option<Stream>,
    bad_probs: Vec<f64>,
    sentence_score: Option<f64>,
}

/// Gold tags and HTER derived from one (MT, post-edit) pair.
pub struct KiwiLabels {
    mt_tags: Vec<u8>,
    gap_tags: Vec<u8>,
    hter: f64,
    edits: usize,
}

struct Failure(KiwiStatus, String);

impl Failure {
    fn new(status: KiwiStatus, message: impl Into<String>) -> Self {
        Failure(status, message.into())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KiwiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KiwiStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            KiwiStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(KiwiStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(KiwiStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::new(KiwiStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `p` is null only when `n` is 0; otherwise it points to `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(KiwiStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn tags(bytes: &[u8], what: &str) -> Result<Vec<Tag>, Failure> {
    bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(Tag::Ok),
            1 => Ok(Tag::Bad),
            _ => Err(Failure::new(KiwiStatus::InvalidArgument, format!("{what}: tag byte {b} is not 0 or 1"))),
        })
        .collect()
}

fn metric_failure(e: MetricError) -> Failure {
    let status = match e {
        MetricError::LengthMismatch { .. } => KiwiStatus::LengthMismatch,
        _ => KiwiStatus::Undefined,
    };
    Failure::new(status, e.to_string())
}

/// # Safety
/// `out` is null or points to `cap` writable values; `len` is writable.
unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, cap: usize, len: *mut usize) -> Result<(), Failure> {
    *out_ptr(len, "len")? = src.len();
    if src.len() > cap {
        return Err(Failure::new(
            KiwiStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        ptr::copy_nonoverlapping(src.as_ptr(), out_ptr(out, "out")?, src.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kiwi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next kiwi call on the same thread.
#[no_mangle]
pub extern "C" fn kiwi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// HTER of `mt` against its post-edit `pe`.
///
/// # Safety
/// `mt` and `pe` are valid C strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_hter(mt: *const c_char, pe: *const c_char, out: *mut f64) -> KiwiStatus {
    guard(|| {
        let mt: Vec<&str> = text(mt, "mt")?.split_whitespace().collect();
        let pe: Vec<&str> = text(pe, "pe")?.split_whitespace().collect();
        *out_ptr(out, "out")? = kiwi::labels::hter(&mt, &pe);
        Ok(())
    })
}

/// Derives MT and gap tags and HTER from `mt` and its post-edit `pe`.
///
/// # Safety
/// `mt` and `pe` are valid C strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_label(mt: *const c_char, pe: *const c_char, out: *mut *mut KiwiLabels) -> KiwiStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let split = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        let triplet = SentenceTriplet {
            mt: split(text(mt, "mt")?),
            pe: split(text(pe, "pe")?),
            source: Vec::new(),
            alignments: Vec::new(),
        };
        let l = label_triplet(&triplet).map_err(|e| Failure::new(KiwiStatus::InvalidArgument, e.to_string()))?;
        let bytes = |t: &[Tag]| t.iter().map(|t| u8::from(*t == Tag::Bad)).collect();
        *out = Box::into_raw(Box::new(KiwiLabels {
            mt_tags: bytes(&l.tags.mt_tags),
            gap_tags: bytes(&l.tags.gap_tags),
            hter: l.hter,
            edits: l.edits,
        }));
        Ok(())
    })
}

/// # Safety
/// `labels` is null or a handle from [`kiwi_label`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kiwi_labels_free(labels: *mut KiwiLabels) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// # Safety
/// `labels` is a live handle; `hter` and `edits` are writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_labels_hter(labels: *const KiwiLabels, hter: *mut f64, edits: *mut usize) -> KiwiStatus {
    guard(|| {
        let l = labels.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "labels is null"))?;
        *out_ptr(hter, "hter")? = l.hter;
        *out_ptr(edits, "edits")? = l.edits;
        Ok(())
    })
}

/// Copies the MT tags (one per MT token) into `out`. `len` receives the
/// number of tags even when `cap` is too small.
///
/// # Safety
/// `labels` is a live handle; `out` has room for `cap` bytes; `len` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_labels_mt_tags(labels: *const KiwiLabels, out: *mut u8, cap: usize, len: *mut usize) -> KiwiStatus {
    guard(|| {
        let l = labels.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "labels is null"))?;
        copy_out(&l.mt_tags, out, cap, len)
    })
}

/// Copies the gap tags (one more than MT tokens) into `out`.
///
/// # Safety
/// As for [`kiwi_labels_mt_tags`].
#[no_mangle]
pub unsafe extern "C" fn kiwi_labels_gap_tags(labels: *const KiwiLabels, out: *mut u8, cap: usize, len: *mut usize) -> KiwiStatus {
    guard(|| {
        let l = labels.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "labels is null"))?;
        copy_out(&l.gap_tags, out, cap, len)
    })
}

/// Product of the OK and BAD F1 scores of `pred` against `gold`.
///
/// # Safety
/// `gold` and `pred` point to `n` bytes each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_f1_mult(gold: *const u8, pred: *const u8, n: usize, out: *mut f64) -> KiwiStatus {
    guard(|| {
        let g = tags(slice(gold, n, "gold")?, "gold")?;
        let p = tags(slice(pred, n, "pred")?, "pred")?;
        *out_ptr(out, "out")? = f1_mult(&g, &p).map_err(metric_failure)?.f1_mult;
        Ok(())
    })
}

/// Pearson correlation of two series of length `n`.
///
/// # Safety
/// `x` and `y` point to `n` doubles each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> KiwiStatus {
    guard(|| {
        let r = pearson(slice(x, n, "x")?, slice(y, n, "y")?).map_err(metric_failure)?;
        *out_ptr(out, "out")? = r;
        Ok(())
    })
}

/// Spearman rank correlation (average ranks for ties).
///
/// # Safety
/// As for [`kiwi_pearson`].
#[no_mangle]
pub unsafe extern "C" fn kiwi_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> KiwiStatus {
    guard(|| {
        let r = spearman(slice(x, n, "x")?, slice(y, n, "y")?).map_err(metric_failure)?;
        *out_ptr(out, "out")? = r;
        Ok(())
    })
}

/// Loads a model directory or a training run directory.
///
/// # Safety
/// `path` is a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_model_load(path: *const c_char, out: *mut *mut KiwiModel) -> KiwiStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = text(path, "path")?;
        let inner = LoadedModel::load(Path::new(path)).map_err(|e| Failure::new(KiwiStatus::Model, e.to_string()))?;
        *out = Box::into_raw(Box::new(KiwiModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle from [`kiwi_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kiwi_model_free(model: *mut KiwiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Stream the model tags.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_model_stream(model: *const KiwiModel, out: *mut KiwiStream) -> KiwiStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "model is null"))?;
        *out_ptr(out, "out")? = m.inner.task().into();
        Ok(())
    })
}

/// Predicts one sentence pair. `alignments` may be null (no alignments) or
/// a line of `i-j` pairs.
///
/// # Safety
/// `model` is a live handle; string arguments are valid C strings or, for
/// `alignments`, null; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_model_predict(
    model: *const KiwiModel,
    source: *const c_char,
    mt: *const c_char,
    alignments: *const c_char,
    out: *mut *mut KiwiPrediction,
) -> KiwiStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "model is null"))?;
        let out = out_ptr(out, "out")?;
        let mut sample = QeSample::new(text(source, "source")?, text(mt, "mt")?);
        if !alignments.is_null() {
            sample.alignments = parse_alignments(text(alignments, "alignments")?, sample.source.len(), sample.mt.len())
                .map_err(|e| Failure::new(KiwiStatus::InvalidArgument, e.to_string()))?;
        }
        let p = m
            .inner
            .predict(std::slice::from_ref(&sample), "ffi")
            .map_err(|e| Failure::new(KiwiStatus::Model, e.to_string()))?;
        let stream = m.inner.task();
        let bad_probs = stream
            .and_then(|s| p.streams.get(&s))
            .and_then(|v| v.first().cloned())
            .unwrap_or_default();
        *out = Box::into_raw(Box::new(KiwiPrediction {
            stream,
            bad_probs,
            sentence_score: p.sentence_scores.and_then(|s| s.first().copied()),
        }));
        Ok(())
    })
}

/// # Safety
/// `prediction` is null or a handle from [`kiwi_model_predict`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn kiwi_prediction_free(prediction: *mut KiwiPrediction) {
    if !prediction.is_null() {
        drop(Box::from_raw(prediction));
    }
}

/// Copies the per-token BAD probabilities into `out`.
///
/// # Safety
/// `prediction` is a live handle; `out` has room for `cap` doubles; `len`
/// and `stream` are writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_prediction_bad_probs(
    prediction: *const KiwiPrediction,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
    stream: *mut KiwiStream,
) -> KiwiStatus {
    guard(|| {
        let p = prediction.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "prediction is null"))?;
        *out_ptr(stream, "stream")? = p.stream.into();
        copy_out(&p.bad_probs, out, cap, len)
    })
}

/// Sentence-level score; `KIWI_STATUS_UNDEFINED` for word-only models.
///
/// # Safety
/// `prediction` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kiwi_prediction_sentence_score(prediction: *const KiwiPrediction, out: *mut f64) -> KiwiStatus {
    guard(|| {
        let p = prediction.as_ref().ok_or_else(|| Failure::new(KiwiStatus::NullPointer, "prediction is null"))?;
        let s = p
            .sentence_score
            .ok_or_else(|| Failure::new(KiwiStatus::Undefined, "model has no sentence-level output"))?;
        *out_ptr(out, "out")? = s;
        Ok(())
    })
}
