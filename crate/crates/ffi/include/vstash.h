#ifndef VSTASH_H
#define VSTASH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum VstashStatus {
  VSTASH_STATUS_OK = 0,
  VSTASH_STATUS_NULL_ARGUMENT = 1,
  VSTASH_STATUS_INVALID_UTF8 = 2,
  VSTASH_STATUS_INVALID_ARGUMENT = 3,
  VSTASH_STATUS_NOT_FOUND = 4,
  VSTASH_STATUS_CORRUPT = 5,
  VSTASH_STATUS_SCHEMA_VERSION = 6,
  VSTASH_STATUS_EMPTY_STORE = 7,
  VSTASH_STATUS_IO = 8,
  VSTASH_STATUS_STORAGE = 9,
  VSTASH_STATUS_INTERNAL = 10,
} VstashStatus;

/**
 * Opaque store handle: a store plus the embedder its vectors came from.
 */
typedef struct VstashStore VstashStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *vstash_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread. Do not free.
 */
const char *vstash_last_error(void);

/**
 * Opens (or with `create`, creates) a store.
 *
 * `embedder` selects the provider (`test`, `test:<dim>` or
 * `precomputed:<path>`); null uses the store's recorded selector, or the
 * default test embedder.
 *
 * # Safety
 * `path` and a non-null `embedder` must be NUL-terminated strings; `out`
 * must be writable. On success `*out` owns a handle for [`vstash_close`].
 */
enum VstashStatus vstash_open(const char *path,
                              bool create,
                              const char *embedder,
                              struct VstashStore **out);

/**
 * Closes a handle. Null is ignored.
 *
 * # Safety
 * `handle` is null or a pointer from [`vstash_open`] not yet closed.
 */
void vstash_close(struct VstashStore *handle);

/**
 * Chunks, embeds and stores `text` as a prose document. A complete copy
 * with identical content is skipped. Writes the document id to
 * `out_doc_id` when it is non-null.
 *
 * # Safety
 * `handle` is live; `uri` and `text` are NUL-terminated; `collection` is
 * null (meaning `default`) or NUL-terminated.
 */
enum VstashStatus vstash_add_text(const struct VstashStore *handle,
                                  const char *uri,
                                  const char *collection,
                                  const char *text,
                                  int64_t *out_doc_id);

/**
 * Searches and writes a JSON array of results to `*out_json`, each
 * `{chunk_id, doc_id, score, tier, context, diagnostics}`.
 *
 * `mode` is null (hybrid) or one of `hybrid`, `vector`, `fts`. Searches
 * through this call do not record telemetry.
 *
 * # Safety
 * `handle` is live; `query` is NUL-terminated; `mode` is null or
 * NUL-terminated; `out_json` is writable.
 */
enum VstashStatus vstash_search_json(const struct VstashStore *handle,
                                     const char *query,
                                     uint32_t k,
                                     const char *mode,
                                     char **out_json);

/**
 * Runs every integrity invariant, writing the JSON report
 * `[{invariant, pass, offenders}]` to `*out_json` and the overall verdict
 * to `*out_passed` when non-null.
 *
 * # Safety
 * `handle` is live; `out_json` is writable; `out_passed` is null or writable.
 */
enum VstashStatus vstash_check_json(const struct VstashStore *handle,
                                    char **out_json,
                                    bool *out_passed);

/**
 * Writes the text of one chunk to `*out_text`.
 *
 * # Safety
 * `handle` is live; `out_text` is writable.
 */
enum VstashStatus vstash_get_chunk_text(const struct VstashStore *handle,
                                        int64_t chunk_id,
                                        char **out_text);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or a string from this library not yet freed.
 */
void vstash_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VSTASH_H */
