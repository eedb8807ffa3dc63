/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SEDETECT_H
#define SEDETECT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SedStatus {
  SED_STATUS_OK = 0,
  SED_STATUS_NULL_POINTER = 1,
  SED_STATUS_INVALID_UTF8 = 2,
  SED_STATUS_INVALID_JSON = 3,
  SED_STATUS_INVALID_CONFIG = 4,
  SED_STATUS_INVALID_INPUT = 5,
  SED_STATUS_MISALIGNED = 6,
  SED_STATUS_DUPLICATE_MENTION = 7,
  SED_STATUS_INTERNAL = 8,
} SedStatus;

// Gold labels to attach while encoding.
typedef enum SedLabelMode {
  SED_LABEL_MODE_NONE = 0,
  SED_LABEL_MODE_TYPED = 1,
  SED_LABEL_MODE_BINARY = 2,
} SedLabelMode;

// Opaque encoder handle.
typedef struct SedEncoder SedEncoder;

// Opaque accumulator of scoring counts.
typedef struct SedScorer SedScorer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until
// the next call into this library on the same thread.
const char *sed_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void sed_string_free(char *s);

// Parses one page; `*out` receives its listings as JSON lines.
//
// # Safety
// `title` and `wikitext` must be NUL-terminated; `out` must be writable.
enum SedStatus sed_parse_page(const char *title,
                              const char *wikitext,
                              size_t min_items,
                              char **out);

// Creates an encoder from a JSON encoder config; NULL uses the defaults.
//
// # Safety
// `config_json` must be NULL or NUL-terminated; `out` must be writable.
enum SedStatus sed_encoder_new(const char *config_json, struct SedEncoder **out);

// Encodes one listing (JSON); `*out` receives its chunks as JSON lines.
//
// # Safety
// `encoder` must be a live handle; `listing_json` NUL-terminated; `out` writable.
enum SedStatus sed_encoder_encode(const struct SedEncoder *encoder,
                                  const char *listing_json,
                                  enum SedLabelMode labels,
                                  char **out);

// # Safety
// `encoder` must be NULL or a handle from [`sed_encoder_new`] not yet freed.
void sed_encoder_free(struct SedEncoder *encoder);

// Decodes one chunk with its prediction (both JSON); `*out` receives the
// mentions as JSON lines.
//
// # Safety
// Both inputs must be NUL-terminated; `out` must be writable.
enum SedStatus sed_decode_mentions(const char *chunk_json, const char *prediction_json, char **out);

// # Safety
// `out` must be writable.
enum SedStatus sed_scorer_new(struct SedScorer **out);

// Adds gold and predicted mentions (JSON lines) of one batch of listings.
// Nothing is added when the call fails.
//
// # Safety
// `scorer` must be a live handle; inputs must be NUL-terminated.
enum SedStatus sed_scorer_add(struct SedScorer *scorer,
                              const char *gold_jsonl,
                              const char *pred_jsonl);

// Writes the report so far as JSON to `*out`.
//
// # Safety
// `scorer` must be a live handle; `out` must be writable.
enum SedStatus sed_scorer_report(const struct SedScorer *scorer, char **out);

// # Safety
// `scorer` must be NULL or a handle from [`sed_scorer_new`] not yet freed.
void sed_scorer_free(struct SedScorer *scorer);

// Library version, statically allocated.
const char *sed_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEDETECT_H */
