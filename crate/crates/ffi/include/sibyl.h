/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SIBYL_H
#define SIBYL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum SibylStatus {
  SIBYL_STATUS_OK = 0,
  SIBYL_STATUS_NULL_ARGUMENT = 1,
  SIBYL_STATUS_INVALID_UTF8 = 2,
  SIBYL_STATUS_IO = 3,
  SIBYL_STATUS_VALIDATION_FAILED = 4,
  SIBYL_STATUS_CASE_NOT_FOUND = 5,
  SIBYL_STATUS_INVALID_INPUT = 6,
  SIBYL_STATUS_TOO_MANY_CHANGES = 7,
  SIBYL_STATUS_INVALID_CHANGE = 8,
  SIBYL_STATUS_FEATURE_DISABLED = 9,
  SIBYL_STATUS_INTERNAL = 10,
  SIBYL_STATUS_PANIC = 11,
} SibylStatus;

// Loaded engine. Read-only once opened, so one handle may be shared
// across threads.
typedef struct SibylEngine SibylEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Opens an engine from explicit file paths. On success `*out` owns a
// handle to release with [`sibyl_engine_free`].
//
// # Safety
// Path arguments must be null or NUL-terminated strings; `out` must be
// null or writable.
enum SibylStatus sibyl_engine_open(const char *model,
                                   const char *factors,
                                   const char *cases,
                                   const char *outcomes,
                                   const char *events,
                                   bool review_mode,
                                   struct SibylEngine **out);

// Opens an engine from a directory holding the standard file names.
//
// # Safety
// As for [`sibyl_engine_open`].
enum SibylStatus sibyl_engine_open_dir(const char *dir, bool review_mode, struct SibylEngine **out);

// Releases an engine. Null is ignored.
//
// # Safety
// `engine` must be null or a handle from an open call, freed only once.
void sibyl_engine_free(struct SibylEngine *engine);

// Number of reference cases.
//
// # Safety
// `engine` must be a live handle or null; `out` writable or null.
enum SibylStatus sibyl_case_count(const struct SibylEngine *engine, size_t *out);

// Risk score (1 to 20) and raw model output of one case.
//
// # Safety
// `engine` must be a live handle or null; strings NUL-terminated; outputs
// writable or null.
enum SibylStatus sibyl_case_score(const struct SibylEngine *engine,
                                  const char *case_id,
                                  uint8_t *out_score,
                                  double *out_raw);

// Presented contributions. `view` is "top", "all" or "split", or null for
// "top".
//
// # Safety
// As for [`sibyl_case_score`]; `out` receives a string for
// [`sibyl_string_free`].
enum SibylStatus sibyl_contributions_json(const struct SibylEngine *engine,
                                          const char *case_id,
                                          const char *view,
                                          char **out);

// Rescores a case under the changes in `request_json`, shaped like the
// HTTP body: `{"changes":[{"factor":..,"value":..}]}`.
//
// # Safety
// As for [`sibyl_contributions_json`].
enum SibylStatus sibyl_whatif_json(const struct SibylEngine *engine,
                                   const char *case_id,
                                   const char *request_json,
                                   char **out);

// Effect of reversing each standalone Boolean factor.
//
// # Safety
// As for [`sibyl_contributions_json`].
enum SibylStatus sibyl_flips_json(const struct SibylEngine *engine,
                                  const char *case_id,
                                  char **out);

// Model metadata and presented factor list.
//
// # Safety
// As for [`sibyl_contributions_json`].
enum SibylStatus sibyl_model_json(const struct SibylEngine *engine, char **out);

// Global importance computed when the engine was opened.
//
// # Safety
// As for [`sibyl_contributions_json`].
enum SibylStatus sibyl_importance_json(const struct SibylEngine *engine, char **out);

// Distribution bundle for one score in 1..=20.
//
// # Safety
// As for [`sibyl_contributions_json`].
enum SibylStatus sibyl_distributions_json(const struct SibylEngine *engine,
                                          uint8_t score,
                                          char **out);

// Nearest reference cases and timelines. Needs an engine opened in review
// mode; `k` of 0 means the default.
//
// # Safety
// As for [`sibyl_contributions_json`].
enum SibylStatus sibyl_similar_json(const struct SibylEngine *engine,
                                    const char *case_id,
                                    size_t k,
                                    char **out);

// Message for the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *sibyl_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library, freed only once.
void sibyl_string_free(char *s);

// Library version as a static string.
const char *sibyl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIBYL_H */
