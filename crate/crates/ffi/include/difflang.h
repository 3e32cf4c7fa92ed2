#ifndef DIFFLANG_H
#define DIFFLANG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Gradient backend selector.
 */
typedef enum DlBackend {
  DL_BACKEND_FORWARD = 0,
  DL_BACKEND_REVERSE = 1,
  DL_BACKEND_NUMERIC = 2,
} DlBackend;

/**
 * Result of every fallible call.
 */
typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_NULL_ARGUMENT = 1,
  DL_STATUS_INVALID_UTF8 = 2,
  DL_STATUS_PARSE_ERROR = 3,
  DL_STATUS_INVALID_PROGRAM = 4,
  DL_STATUS_UNKNOWN_FUNCTION = 5,
  DL_STATUS_AD_ERROR = 6,
  DL_STATUS_EVAL_ERROR = 7,
  DL_STATUS_POINT_ERROR = 8,
  DL_STATUS_INVALID_ARGUMENT = 9,
  DL_STATUS_BUFFER_TOO_SMALL = 10,
  DL_STATUS_PANIC = 11,
} DlStatus;

/**
 * A function prepared for repeated gradient evaluation.
 */
typedef struct DlGradient DlGradient;

/**
 * A parsed and validated program.
 */
typedef struct DlProgram DlProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dl_last_error(void);

/**
 * Parse and validate DSL source.
 *
 * # Safety
 * `src` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DlStatus dl_program_parse(const char *src, struct DlProgram **out);

/**
 * Release a program. Null is ignored.
 *
 * # Safety
 * `p` must come from [`dl_program_parse`] and not be used afterwards.
 */
void dl_program_free(struct DlProgram *p);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void dl_string_free(char *s);

/**
 * Call `fname` at `point` (e.g. `"p=[1,2],dim=2"`).
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum DlStatus dl_eval(const struct DlProgram *p, const char *fname, const char *point, double *out);

/**
 * Source of the forward-mode derivative of `fname` with respect to `wrt`
 * (`"x"` or `"p[2]"`).
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum DlStatus dl_differentiate(const struct DlProgram *p,
                               const char *fname,
                               const char *wrt,
                               char **out);

/**
 * Source of the reverse-mode gradient of `fname`. `wrt` is a
 * comma-separated parameter list; empty means every double and array
 * parameter.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum DlStatus dl_gradient_source(const struct DlProgram *p,
                                 const char *fname,
                                 const char *wrt,
                                 char **out);

/**
 * Prepare `fname` for gradient evaluation with respect to `wrt`
 * (comma-separated; empty means every double and array parameter).
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum DlStatus dl_gradient_new(const struct DlProgram *p,
                              const char *fname,
                              const char *wrt,
                              struct DlGradient **out);

/**
 * Release a gradient handle. Null is ignored.
 *
 * # Safety
 * `g` must come from [`dl_gradient_new`] and not be used afterwards.
 */
void dl_gradient_free(struct DlGradient *g);

/**
 * Evaluate the gradient at `point` into `out[0..cap]`. `len` receives the
 * gradient length; if it exceeds `cap`, nothing is written and
 * `DL_STATUS_BUFFER_TOO_SMALL` is returned. `backend` is a [`DlBackend`]
 * value. `eps` is the central-difference step for the numeric backend and
 * is ignored otherwise.
 *
 * # Safety
 * Pointers must be valid; `out` must hold `cap` doubles.
 */
enum DlStatus dl_gradient_eval(const struct DlGradient *g,
                               int32_t backend,
                               const char *point,
                               double eps,
                               double *out,
                               size_t cap,
                               size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFLANG_H */
