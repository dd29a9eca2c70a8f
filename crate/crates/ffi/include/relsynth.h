#ifndef RELSYNTH_H
#define RELSYNTH_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

enum RsStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_CONFIG = 2,
  RS_STATUS_DATA = 3,
  RS_STATUS_BUDGET = 4,
  RS_STATUS_NUMERIC = 5,
  RS_STATUS_IO = 6,
  RS_STATUS_INTERNAL = 7,
};
#ifndef __cplusplus
typedef int32_t RsStatus;
#endif // __cplusplus

// Opaque database handle.
typedef struct RsDatabase RsDatabase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into this library on the same thread.
const char *rs_last_error(void);

// Library version as a static string.
const char *rs_version(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void rs_string_free(char *s);

// Analytic Gaussian γ for (ε, δ).
//
// # Safety
// `out` must be a valid pointer.
RsStatus rs_solve_gamma(double epsilon, double delta, double *out);

// 95% confidence interval widths for one tuple and for all `m` tuples of a
// group, each under its own sensitivity.
//
// # Safety
// `one` and `all` must be valid pointers.
RsStatus rs_ci_width(double m, double epsilon, double delta, double *one, double *all);

// Loads a schema JSON file and one CSV per relation from `data_dir`.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be a valid pointer.
RsStatus rs_database_load(const char *schema_path, const char *data_dir, struct RsDatabase **out);

// # Safety
// `db` must come from this library and not be freed twice.
void rs_database_free(struct RsDatabase *db);

// Number of rows of relation `name`.
//
// # Safety
// `db` must be a live handle, `name` a NUL-terminated string, `out` valid.
RsStatus rs_database_rows(const struct RsDatabase *db, const char *name, uintptr_t *out);

// Schema of the database as a JSON string; release it with `rs_string_free`.
// Returns NULL on failure.
//
// # Safety
// `db` must be a live handle.
char *rs_database_schema_json(const struct RsDatabase *db);

// Writes one CSV per relation into `dir`.
//
// # Safety
// `db` must be a live handle and `dir` a NUL-terminated string.
RsStatus rs_database_write(const struct RsDatabase *db, const char *dir);

// Synthesizes a database. `delta <= 0` selects 1 / rows of the largest
// secondary relation. `settings_json` may be NULL or a JSON object with any
// of `config`, `tau` and `stage_weights`. On success `*out` holds a new handle
// and `*cost` the privacy cost spent.
//
// # Safety
// `db` must be a live handle, `settings_json` NULL or NUL-terminated, and
// `out` and `cost` valid pointers (`cost` may be NULL).
RsStatus rs_synthesize(const struct RsDatabase *db,
                       double epsilon,
                       double delta,
                       uint64_t seed,
                       const char *settings_json,
                       struct RsDatabase **out,
                       double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELSYNTH_H */
