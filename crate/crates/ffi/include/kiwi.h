#ifndef KIWI_H
#define KIWI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum KiwiStatus {
  KIWI_STATUS_OK = 0,
  KIWI_STATUS_NULL_POINTER = 1,
  KIWI_STATUS_INVALID_UTF8 = 2,
  KIWI_STATUS_INVALID_ARGUMENT = 3,
  // Input lengths disagree.
  KIWI_STATUS_LENGTH_MISMATCH = 4,
  // The value does not exist for these inputs (for example Pearson of a
  // constant series, or a sentence score from a word-only model).
  KIWI_STATUS_UNDEFINED = 5,
  // A model could not be loaded or run.
  KIWI_STATUS_MODEL = 6,
  // The caller's buffer is too small; the required size was written.
  KIWI_STATUS_BUFFER_TOO_SMALL = 7,
  KIWI_STATUS_PANIC = 99,
} KiwiStatus;

// Output stream of a word-level prediction.
typedef enum KiwiStream {
  KIWI_STREAM_MT = 0,
  KIWI_STREAM_GAP = 1,
  KIWI_STREAM_SOURCE = 2,
  // The model only scores sentences.
  KIWI_STREAM_NONE = 3,
} KiwiStream;

// Gold tags and HTER derived from one (MT, post-edit) pair.
typedef struct KiwiLabels KiwiLabels;

// A loaded model (neural or stacked).
typedef struct KiwiModel KiwiModel;

// Output of [`kiwi_model_predict`] for one sentence.
typedef struct KiwiPrediction KiwiPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *kiwi_version(void);

// Message of the last failed call on this thread, or null after a
// successful call. Valid until the next kiwi call on the same thread.
const char *kiwi_last_error(void);

// HTER of `mt` against its post-edit `pe`.
//
// # Safety
// `mt` and `pe` are valid C strings; `out` is writable.
enum KiwiStatus kiwi_hter(const char *mt, const char *pe, double *out);

// Derives MT and gap tags and HTER from `mt` and its post-edit `pe`.
//
// # Safety
// `mt` and `pe` are valid C strings; `out` is writable.
enum KiwiStatus kiwi_label(const char *mt, const char *pe, struct KiwiLabels **out);

// # Safety
// `labels` is null or a handle from [`kiwi_label`] not yet freed.
void kiwi_labels_free(struct KiwiLabels *labels);

// # Safety
// `labels` is a live handle; `hter` and `edits` are writable.
enum KiwiStatus kiwi_labels_hter(const struct KiwiLabels *labels, double *hter, size_t *edits);

// Copies the MT tags (one per MT token) into `out`. `len` receives the
// number of tags even when `cap` is too small.
//
// # Safety
// `labels` is a live handle; `out` has room for `cap` bytes; `len` is
// writable.
enum KiwiStatus kiwi_labels_mt_tags(const struct KiwiLabels *labels,
                                    uint8_t *out,
                                    size_t cap,
                                    size_t *len);

// Copies the gap tags (one more than MT tokens) into `out`.
//
// # Safety
// As for [`kiwi_labels_mt_tags`].
enum KiwiStatus kiwi_labels_gap_tags(const struct KiwiLabels *labels,
                                     uint8_t *out,
                                     size_t cap,
                                     size_t *len);

// Product of the OK and BAD F1 scores of `pred` against `gold`.
//
// # Safety
// `gold` and `pred` point to `n` bytes each; `out` is writable.
enum KiwiStatus kiwi_f1_mult(const uint8_t *gold, const uint8_t *pred, size_t n, double *out);

// Pearson correlation of two series of length `n`.
//
// # Safety
// `x` and `y` point to `n` doubles each; `out` is writable.
enum KiwiStatus kiwi_pearson(const double *x, const double *y, size_t n, double *out);

// Spearman rank correlation (average ranks for ties).
//
// # Safety
// As for [`kiwi_pearson`].
enum KiwiStatus kiwi_spearman(const double *x, const double *y, size_t n, double *out);

// Loads a model directory or a training run directory.
//
// # Safety
// `path` is a valid C string; `out` is writable.
enum KiwiStatus kiwi_model_load(const char *path, struct KiwiModel **out);

// # Safety
// `model` is null or a handle from [`kiwi_model_load`] not yet freed.
void kiwi_model_free(struct KiwiModel *model);

// Stream the model tags.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum KiwiStatus kiwi_model_stream(const struct KiwiModel *model, enum KiwiStream *out);

// Predicts one sentence pair. `alignments` may be null (no alignments) or
// a line of `i-j` pairs.
//
// # Safety
// `model` is a live handle; string arguments are valid C strings or, for
// `alignments`, null; `out` is writable.
enum KiwiStatus kiwi_model_predict(const struct KiwiModel *model,
                                   const char *source,
                                   const char *mt,
                                   const char *alignments,
                                   struct KiwiPrediction **out);

// # Safety
// `prediction` is null or a handle from [`kiwi_model_predict`] not yet
// freed.
void kiwi_prediction_free(struct KiwiPrediction *prediction);

// Copies the per-token BAD probabilities into `out`.
//
// # Safety
// `prediction` is a live handle; `out` has room for `cap` doubles; `len`
// and `stream` are writable.
enum KiwiStatus kiwi_prediction_bad_probs(const struct KiwiPrediction *prediction,
                                          double *out,
                                          size_t cap,
                                          size_t *len,
                                          enum KiwiStream *stream);

// Sentence-level score; `KIWI_STATUS_UNDEFINED` for word-only models.
//
// # Safety
// `prediction` is a live handle; `out` is writable.
enum KiwiStatus kiwi_prediction_sentence_score(const struct KiwiPrediction *prediction,
                                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KIWI_H */
