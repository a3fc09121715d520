#ifndef THETACG_H
#define THETACG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TCG_OK = 0,
  TCG_NULL_POINTER = 1,
  TCG_INVALID_ARGUMENT = 2,
  TCG_DIMENSION_MISMATCH = 3,
  TCG_PRECONDITION = 4,
  TCG_NUMERICAL = 5,
  TCG_PANIC = 6,
} TcgStatus;

typedef enum {
  TCG_ITERATION_LIMIT = 0,
  TCG_CONVERGED = 1,
  TCG_EXHAUSTED = 2,
  TCG_BREAKDOWN = 3,
} TcgTermination;

/**
 * The iterates `f_0, …, f_N` of one run.
 */
typedef struct TcgHistory TcgHistory;

/**
 * An inverse problem `A f = g` with its initial guess.
 */
typedef struct TcgProblem TcgProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds test `id` (`"1a"`, `"1b"`, `"2a"`, `"2b"`) on `n` grid points of
 * `[-half_length, half_length)`. `n = 0` selects the default grid.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
TcgStatus tcg_problem_from_test(const char *id, size_t n, double half_length, TcgProblem **out);

/**
 * `A = diag(eigenvalues)` with initial error `error` (so the known
 * solution is `-error` and `f_0 = 0`).
 *
 * # Safety
 * Both arrays must hold `dim` values; `out` must be a valid pointer.
 */
TcgStatus tcg_problem_from_diagonal(const double *eigenvalues,
                                    const double *error,
                                    size_t dim,
                                    TcgProblem **out);

/**
 * # Safety
 * `problem` must come from a `tcg_problem_from_*` call (or be null) and is
 * invalid afterwards.
 */
void tcg_problem_free(TcgProblem *problem);

/**
 * Dimension of the discretised problem; 0 for a null handle.
 *
 * # Safety
 * `problem` must be a live handle or null.
 */
size_t tcg_problem_dimension(const TcgProblem *problem);

/**
 * `‖A f − g‖ / ‖g‖` of the manufactured solution; NaN for a null handle.
 *
 * # Safety
 * `problem` must be a live handle or null.
 */
double tcg_problem_consistency(const TcgProblem *problem);

/**
 * Writes `f_N` into `out` (length `len` = dimension). Integer `theta ≥ 1`
 * runs matrix-free; other `theta ≥ 0` use the eigenbasis.
 *
 * # Safety
 * `problem` must be a live handle and `out` must hold `len` values.
 */
TcgStatus tcg_theta_iterate(const TcgProblem *problem,
                            double theta,
                            size_t n,
                            double *out,
                            size_t len);

/**
 * Runs `N = 0..=n_max` and stores every iterate.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
TcgStatus tcg_run(const TcgProblem *problem, double theta, size_t n_max, TcgHistory **out);

/**
 * # Safety
 * `history` must come from [`tcg_run`] (or be null) and is invalid
 * afterwards.
 */
void tcg_history_free(TcgHistory *history);

/**
 * Number of stored iterates, including `f_0`; 0 for a null handle.
 *
 * # Safety
 * `history` must be a live handle or null.
 */
size_t tcg_history_len(const TcgHistory *history);

/**
 * # Safety
 * `history` must be a live handle or null.
 */
TcgTermination tcg_history_termination(const TcgHistory *history);

/**
 * Copies the `index`-th stored iterate into `out`.
 *
 * # Safety
 * `history` must be a live handle and `out` must hold `len` values.
 */
TcgStatus tcg_history_iterate(const TcgHistory *history, size_t index, double *out, size_t len);

/**
 * `ρ_σ(x) = ‖A^{σ/2}(x − P_S x)‖²` measured against the problem's known
 * solution.
 *
 * # Safety
 * `problem` must be a live handle, `x` must hold `len` values and `out`
 * must be a valid pointer.
 */
TcgStatus tcg_rho(const TcgProblem *problem,
                  const double *x,
                  size_t len,
                  double sigma,
                  double *out);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tcg_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THETACG_H */
