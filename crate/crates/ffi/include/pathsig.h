#ifndef PATHSIG_H
#define PATHSIG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PathsigStatus {
  PATHSIG_STATUS_OK = 0,
  // Invalid argument or configuration.
  PATHSIG_STATUS_PARAMETER = 1,
  // Rank-deficient active set or another numerical failure.
  PATHSIG_STATUS_NUMERICAL = 2,
  // Input violates a documented precondition (e.g. a non-orthonormal
  // design where one is required).
  PATHSIG_STATUS_CONTRACT = 3,
  PATHSIG_STATUS_IO = 4,
  PATHSIG_STATUS_NULL_POINTER = 5,
  // An output buffer is shorter than required.
  PATHSIG_STATUS_BUFFER_TOO_SMALL = 6,
  // A Rust panic was caught at the boundary.
  PATHSIG_STATUS_PANIC = 7,
} PathsigStatus;

typedef enum PathsigFamily {
  PATHSIG_FAMILY_ORTHOGONAL = 0,
  PATHSIG_FAMILY_EQUAL_CORR = 1,
  PATHSIG_FAMILY_AR1 = 2,
  PATHSIG_FAMILY_BLOCK_DIAG = 3,
  PATHSIG_FAMILY_IRREP_VIOLATING = 4,
  PATHSIG_FAMILY_IID_GAUSSIAN = 5,
} PathsigFamily;

typedef enum PathsigPenaltyKind {
  PATHSIG_PENALTY_KIND_LASSO = 0,
  PATHSIG_PENALTY_KIND_SCAD = 1,
  PATHSIG_PENALTY_KIND_MCP = 2,
} PathsigPenaltyKind;

// Opaque design matrix with unit-norm columns.
typedef struct PathsigDesign PathsigDesign;

// Opaque lasso path, holding the design and response it was traced on.
typedef struct PathsigPath PathsigPath;

// A penalty; `param` is SCAD's `a` or MCP's `γ` and is ignored for the
// lasso.
typedef struct PathsigPenalty {
  enum PathsigPenaltyKind kind;
  double param;
} PathsigPenalty;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty when none. The
// pointer stays valid until the next failing call on the same thread.
const char *pathsig_last_error(void);

// Draws an `n × p` design of `family`.
//
// # Safety
// `out` must be a valid pointer; on success it receives a handle to
// release with `pathsig_design_free`.
enum PathsigStatus pathsig_design_new(enum PathsigFamily family,
                                      size_t n,
                                      size_t p,
                                      double rho,
                                      size_t block_size,
                                      size_t s,
                                      uint64_t seed,
                                      struct PathsigDesign **out);

// Wraps a column-major `n × p` matrix; columns are scaled to unit norm.
//
// # Safety
// `values` points to `n·p` doubles and `out` is a valid pointer.
enum PathsigStatus pathsig_design_from_values(const double *values,
                                              size_t n,
                                              size_t p,
                                              struct PathsigDesign **out);

// # Safety
// `design` is a live handle; `n` and `p` are valid pointers.
enum PathsigStatus pathsig_design_shape(const struct PathsigDesign *design, size_t *n, size_t *p);

// Copies the standardized matrix, column-major, into `buf`.
//
// # Safety
// `design` is a live handle; `buf` holds `len` writable doubles.
enum PathsigStatus pathsig_design_values(const struct PathsigDesign *design,
                                         double *buf,
                                         size_t len);

// # Safety
// `design` is null or a handle not yet freed.
void pathsig_design_free(struct PathsigDesign *design);

// `y = Xβ + σε`. `beta` lists the leading coefficients (the rest are
// zero); `y` receives `n` values.
//
// # Safety
// `design` is a live handle; `beta` holds `beta_len` doubles; `y` holds
// `y_len` writable doubles.
enum PathsigStatus pathsig_simulate_response(const struct PathsigDesign *design,
                                             const double *beta,
                                             size_t beta_len,
                                             double sigma,
                                             uint64_t seed,
                                             double *y,
                                             size_t y_len);

// Traces the lasso path of `(design, y)` until `max_entries` entering
// events (0 for the whole path).
//
// # Safety
// `design` is a live handle; `y` holds `y_len` doubles; `out` is a valid
// pointer receiving a handle for `pathsig_path_free`.
enum PathsigStatus pathsig_path_new(const struct PathsigDesign *design,
                                    const double *y,
                                    size_t y_len,
                                    size_t max_entries,
                                    struct PathsigPath **out);

// Number of knots (entries and deletions); 0 for a null handle.
//
// # Safety
// `path` is null or a live handle.
size_t pathsig_path_steps(const struct PathsigPath *path);

// Copies the knot values λ_1 > λ_2 > … into `buf`.
//
// # Safety
// `path` is a live handle; `buf` holds `len` writable doubles.
enum PathsigStatus pathsig_path_lambdas(const struct PathsigPath *path, double *buf, size_t len);

// # Safety
// `path` is null or a handle not yet freed.
void pathsig_path_free(struct PathsigPath *path);

// Lasso covariance statistics `T_1..T_m` along `path`.
//
// # Safety
// `path` is a live handle; `out` holds `m` writable doubles.
enum PathsigStatus pathsig_cov_series(const struct PathsigPath *path,
                                      size_t m,
                                      double sigma2,
                                      double *out);

// `T_1..T_m` of an orthonormal design from its sorted knots `v`.
//
// # Safety
// `v` holds `v_len` doubles; `out` holds `m` writable doubles.
enum PathsigStatus pathsig_cov_series_orthogonal(const double *v,
                                                 size_t v_len,
                                                 size_t m,
                                                 double sigma2,
                                                 struct PathsigPenalty penalty,
                                                 double *out);

// Thresholding rule `h_λ(x)` of `penalty`.
//
// # Safety
// `out` is a valid pointer.
enum PathsigStatus pathsig_threshold(struct PathsigPenalty penalty,
                                     double lambda,
                                     double x,
                                     double *out);

// Selects the model size from the lasso statistics `T_1..T_len`.
// `q`, when not null, receives `Q_k` for `k = k_min..=k_max`.
//
// # Safety
// `series` holds `len` doubles; `k0` is valid; `q` is null or holds
// `q_len` writable doubles.
enum PathsigStatus pathsig_select_k0(const double *series,
                                     size_t len,
                                     size_t d,
                                     size_t k_min,
                                     size_t k_max,
                                     size_t *k0,
                                     double *q,
                                     size_t q_len);

// Runs a study from a JSON config (missing fields take the study's
// defaults) and returns its `metric,value,stderr` summary CSV.
//
// # Safety
// `config_json` is a NUL-terminated string; `summary_csv` is a valid
// pointer receiving a string to release with `pathsig_string_free`.
enum PathsigStatus pathsig_run_study(const char *config_json, char **summary_csv);

// # Safety
// `s` is null or a string returned by this library, not yet freed.
void pathsig_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHSIG_H */
