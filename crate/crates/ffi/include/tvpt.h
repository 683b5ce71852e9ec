#ifndef TVPT_H
#define TVPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes shared by every entry point.
 */
typedef enum TvptStatus {
  TVPT_STATUS_OK = 0,
  TVPT_STATUS_NULL_POINTER = 1,
  TVPT_STATUS_INVALID_ARGUMENT = 2,
  TVPT_STATUS_NOT_CONVERGED = 3,
  TVPT_STATUS_PANIC = 4,
} TvptStatus;

/*
 Opaque gradient pattern: the sign of each slot of `Bx`, zero on flat slots.
 */
typedef struct TvptPattern TvptPattern;

/*
 Residuals of the weak-decomposability certificate.
 */
typedef struct TvptCertificate {
  double max_abs;
  double row_residual;
  double orthogonality_residual;
  bool signs_match;
  bool pass;
} TvptCertificate;

/*
 Monte Carlo estimate of a mean squared distance. `lambda_star` is NaN for
 the cone estimate.
 */
typedef struct TvptEstimate {
  double mean;
  double stderr;
  double lambda_star;
  size_t samples;
  bool capped;
} TvptEstimate;

/*
 Diagnostics of one equality-constrained solve.
 */
typedef struct TvptSolveInfo {
  double feas_residual;
  double objective;
  size_t iterations;
  bool converged;
} TvptSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *tvpt_version(void);

/*
 Message for the most recent failure on this thread; empty after a success.
 The pointer stays valid until the next call into the library on this thread.
 */
const char *tvpt_last_error_message(void);

/*
 Pattern of a signal of length `n`; differences of magnitude at most
 `tie_tol` count as flat.

 # Safety
 `signal` must point to `n` readable doubles and `out` to writable storage
 for one handle.
 */
enum TvptStatus tvpt_pattern_from_signal(const double *signal,
                                         size_t n,
                                         double tie_tol,
                                         struct TvptPattern **out);

/*
 Uniformly random pattern with `k` jumps of random sign on a signal of length `n`.

 # Safety
 `out` must point to writable storage for one handle.
 */
enum TvptStatus tvpt_pattern_random(size_t n, size_t k, uint64_t seed, struct TvptPattern **out);

/*
 Release a handle. Null is ignored.

 # Safety
 `p` must be null or a handle from a `tvpt_pattern_*` constructor that has
 not been freed.
 */
void tvpt_pattern_free(struct TvptPattern *p);

/*
 Signal length `n` of the pattern, 0 for a null handle.

 # Safety
 `p` must be null or a live handle.
 */
size_t tvpt_pattern_signal_len(const struct TvptPattern *p);

/*
 Number of jumps (nonzero gradient slots), 0 for a null handle.

 # Safety
 `p` must be null or a live handle.
 */
size_t tvpt_pattern_jump_count(const struct TvptPattern *p);

/*
 Write the subgradient certificate `v0` (length `n - 1`) to `out`.

 # Safety
 `p` must be a live handle and `out` must point to `out_len` writable doubles.
 */
enum TvptStatus tvpt_construct_v0(const struct TvptPattern *p, double *out, size_t out_len);

/*
 Build `v0` and verify weak decomposability with `samples` random members
 of the subdifferential.

 # Safety
 `p` must be a live handle and `out` must point to a writable certificate.
 */
enum TvptStatus tvpt_certify(const struct TvptPattern *p,
                             double tol,
                             size_t samples,
                             uint64_t seed,
                             struct TvptCertificate *out);

/*
 Squared distance from `g` (length `n`) to `lambda` times the subdifferential.

 # Safety
 `p` must be a live handle, `g` must point to `g_len` readable doubles and
 `value` to a writable double.
 */
enum TvptStatus tvpt_dist_sq_scaled(const struct TvptPattern *p,
                                    const double *g,
                                    size_t g_len,
                                    double lambda,
                                    double *value);

/*
 Squared distance from `g` to the cone generated by the subdifferential, and
 the minimizing scale (`lambda` may be null).

 # Safety
 `p` must be a live handle, `g` must point to `g_len` readable doubles,
 `value` to a writable double and `lambda` to a writable double or null.
 */
enum TvptStatus tvpt_dist_sq_cone(const struct TvptPattern *p,
                                  const double *g,
                                  size_t g_len,
                                  double *value,
                                  double *lambda);

/*
 Monte Carlo estimate of `min_lambda E dist(g, lambda subdiff)^2`.

 # Safety
 `p` must be a live handle and `out` must point to a writable estimate.
 */
enum TvptStatus tvpt_minimize_expected_dist(const struct TvptPattern *p,
                                            size_t samples,
                                            uint64_t seed,
                                            struct TvptEstimate *out);

/*
 Monte Carlo estimate of `E dist(g, cone(subdiff))^2`.

 # Safety
 `p` must be a live handle and `out` must point to a writable estimate.
 */
enum TvptStatus tvpt_estimate_cone_dim(const struct TvptPattern *p,
                                       size_t samples,
                                       uint64_t seed,
                                       struct TvptEstimate *out);

/*
 Solve `min ||Bx||_1 s.t. Ax = y` for a row-major `m x n` matrix `a`.

 `max_iter = 0` and `feas_tol <= 0` select the defaults. On
 [`TvptStatus::NotConverged`] `x_out` and `info` still hold the last iterate.

 # Safety
 `a` must point to `m * n` readable doubles, `y` to `m`, `x_out` to `n`
 writable doubles, and `info` to a writable struct or be null.
 */
enum TvptStatus tvpt_solve_tv_equality(const double *a,
                                       size_t m,
                                       size_t n,
                                       const double *y,
                                       size_t max_iter,
                                       double feas_tol,
                                       double *x_out,
                                       struct TvptSolveInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TVPT_H */
