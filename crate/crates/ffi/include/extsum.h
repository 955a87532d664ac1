#ifndef EXTSUM_H
#define EXTSUM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum ExtsumStatus {
  EXTSUM_STATUS_OK = 0,
  EXTSUM_STATUS_NULL_ARGUMENT = 1,
  EXTSUM_STATUS_INVALID_UTF8 = 2,
  EXTSUM_STATUS_INVALID_INPUT = 3,
  EXTSUM_STATUS_IO = 4,
  EXTSUM_STATUS_CHECKPOINT = 5,
  EXTSUM_STATUS_PANIC = 6,
} ExtsumStatus;

/**
 * A loaded model. Opaque to C callers.
 */
typedef struct ExtsumModel ExtsumModel;

/**
 * Sentence-level ROUGE-L between two tokenized texts.
 */
typedef struct ExtsumRouge {
  double precision;
  double recall;
  double f1;
} ExtsumRouge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *extsum_version(void);

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next extsum call on the same thread.
 */
const char *extsum_last_error(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is valid for writes.
 */
enum ExtsumStatus extsum_model_load(const char *path, struct ExtsumModel **out);

/**
 * Loads a checkpoint from memory.
 *
 * # Safety
 * `bytes` points to `len` readable bytes; `out` is valid for writes.
 */
enum ExtsumStatus extsum_model_from_bytes(const uint8_t *bytes,
                                          size_t len,
                                          struct ExtsumModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` is null or came from a load function and was not freed before.
 */
void extsum_model_free(struct ExtsumModel *model);

/**
 * Scores every sentence of `document_json` and selects the `k` most
 * probable, in document order. Writes
 * `{"id", "selected", "sentences", "probabilities"}` as JSON to `out`.
 *
 * # Safety
 * `model` came from a load function; `document_json` is a NUL-terminated
 * string; `out` is valid for writes.
 */
enum ExtsumStatus extsum_summarize(const struct ExtsumModel *model,
                                   const char *document_json,
                                   size_t k,
                                   char **out);

/**
 * Greedy oracle labels for `document_json` against its highlights, with
 * at most `cap` positives. Writes `{"id", "labels", "trace"}` to `out`.
 *
 * # Safety
 * `document_json` is a NUL-terminated string; `out` is valid for writes.
 */
enum ExtsumStatus extsum_label_document(const char *document_json, size_t cap, char **out);

/**
 * Tokenizes both texts and computes ROUGE-L precision, recall and F1.
 *
 * # Safety
 * Both texts are NUL-terminated strings; `out` is valid for writes.
 */
enum ExtsumStatus extsum_rouge_l(const char *candidate,
                                 const char *reference,
                                 struct ExtsumRouge *out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and was not freed before.
 */
void extsum_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXTSUM_H */
