#ifndef WHITNEY_H
#define WHITNEY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WhitneyStatus {
  WHITNEY_STATUS_OK = 0,
  WHITNEY_STATUS_INVALID_INPUT = 1,
  WHITNEY_STATUS_CONFIG = 2,
  WHITNEY_STATUS_UNSUPPORTED_AMBIENT = 3,
  WHITNEY_STATUS_DOMAIN = 4,
  WHITNEY_STATUS_NUMERICAL = 5,
  WHITNEY_STATUS_NULL_POINTER = 6,
  WHITNEY_STATUS_PANIC = 7,
} WhitneyStatus;

// Opaque family of symmetric matrices.
typedef struct WhitneyFamily WhitneyFamily;

// Opaque result of a configured run.
typedef struct WhitneyRun WhitneyRun;

// Terms of the commutator inequality for one family.
typedef struct WhitneyLiLiGap {
  double commutator_sum;
  double s2_sum;
  double rhs;
  double gap;
  // `gap / rhs`, or 0 when the right-hand side vanishes.
  double ratio;
} WhitneyLiLiGap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *whitney_version(void);

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next call into this library from the same thread.
const char *whitney_last_error(void);

// Builds a family from `p` row-major `dim x dim` matrices stored back to back.
//
// # Safety
// `data` must point to `len` readable doubles and `out` must be writable.
enum WhitneyStatus whitney_family_new(size_t p,
                                      size_t dim,
                                      const double *data,
                                      size_t len,
                                      struct WhitneyFamily **out);

// Seeded random family with Frobenius norm at most `scale`.
//
// # Safety
// `out` must be writable.
enum WhitneyStatus whitney_family_random(size_t p,
                                         size_t dim,
                                         uint64_t seed,
                                         double scale,
                                         struct WhitneyFamily **out);

// The 2x2 pair that attains equality.
//
// # Safety
// `out` must be writable.
enum WhitneyStatus whitney_family_equality_pair(struct WhitneyFamily **out);

// # Safety
// `family` must be null or a handle not yet freed.
void whitney_family_free(struct WhitneyFamily *family);

// # Safety
// `family` must be a live handle and `out` writable.
enum WhitneyStatus whitney_family_gap(const struct WhitneyFamily *family,
                                      struct WhitneyLiLiGap *out);

// Parses a TOML run configuration and executes it. Analysis failures and
// failed checks still produce a handle; only an unusable configuration
// returns an error status.
//
// # Safety
// `config` must be a NUL-terminated string and `out` writable.
enum WhitneyStatus whitney_run_config(const char *config, struct WhitneyRun **out);

// Process exit code the CLI would return for this run.
//
// # Safety
// `run` must be a live handle.
int32_t whitney_run_exit_code(const struct WhitneyRun *run);

// True when the run completed and every check passed.
//
// # Safety
// `run` must be a live handle.
bool whitney_run_passed(const struct WhitneyRun *run);

// The JSON report, owned by the handle.
//
// # Safety
// `run` must be a live handle; the string dies with it.
const char *whitney_run_report_json(const struct WhitneyRun *run);

// # Safety
// `run` must be null or a handle not yet freed.
void whitney_run_free(struct WhitneyRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WHITNEY_H */
