#ifndef MOMENT_MEASURES_H
#define MOMENT_MEASURES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum MmStatus {
  MM_STATUS_OK = 0,
  MM_STATUS_NULL_POINTER = 1,
  MM_STATUS_INVALID_INPUT = 2,
  MM_STATUS_NOT_INTEGRABLE = 3,
  MM_STATUS_UNSUPPORTED_DIMENSION = 4,
  MM_STATUS_PRECONDITION = 5,
  MM_STATUS_NOT_CONVERGED = 6,
  MM_STATUS_NUMERICAL = 7,
  MM_STATUS_PANIC = 8,
} MmStatus;

// Opaque weighted atom set.
typedef struct MmMeasure MmMeasure;

// Opaque polyhedral potential `x ↦ max_i (y_i·x − v_i)`.
typedef struct MmPotential MmPotential;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty if none. Valid until the next failing
// call on this thread.
const char *mm_last_error_message(void);

// Creates a measure from `count` atoms of dimension `dim` and their weights.
//
// # Safety
// `atoms` holds `dim * count` values, `weights` holds `count`, `out` is writable.
enum MmStatus mm_measure_new(size_t dim,
                             size_t count,
                             const double *atoms,
                             const double *weights,
                             struct MmMeasure **out);

// # Safety
// `m` is null or came from [`mm_measure_new`] and was not freed.
void mm_measure_free(struct MmMeasure *m);

// Checks the three necessary conditions. `out_failed` receives 0 when all hold, else the
// index (1, 2 or 3) of the first failing condition: total mass, span, barycenter.
//
// # Safety
// `m` is a live handle and `out_failed` is writable.
enum MmStatus mm_measure_validate(const struct MmMeasure *m, double tol, int32_t *out_failed);

// Creates a potential from atoms and values.
//
// # Safety
// `atoms` holds `dim * count` values, `values` holds `count`, `out` is writable.
enum MmStatus mm_potential_new(size_t dim,
                               size_t count,
                               const double *atoms,
                               const double *values,
                               struct MmPotential **out);

// # Safety
// `p` is null or came from this library and was not freed.
void mm_potential_free(struct MmPotential *p);

// Solves for the canonical potential whose moment measure is `m` (exact quadrature,
// dimensions 1 and 2). Running out of iterations still yields a potential, with
// `*out_converged = 0`.
//
// # Safety
// `m` is a live handle; `out` and `out_converged` are writable.
enum MmStatus mm_solve(const struct MmMeasure *m,
                       double gradient_tol,
                       size_t max_iters,
                       struct MmPotential **out,
                       int32_t *out_converged);

// Dimension and atom count of `p`.
//
// # Safety
// `p` is a live handle; outputs are null or writable.
enum MmStatus mm_potential_shape(const struct MmPotential *p, size_t *out_dim, size_t *out_count);

// `ψ(x)` and the index of the maximizing atom (lowest index on ties).
//
// # Safety
// `x` holds `dim` values; outputs are null or writable.
enum MmStatus mm_potential_eval(const struct MmPotential *p,
                                const double *x,
                                double *out_value,
                                size_t *out_index);

// Copies the value array into `out`, which has room for `len` entries.
//
// # Safety
// `out` is writable for `len` values.
enum MmStatus mm_potential_values(const struct MmPotential *p, double *out, size_t len);

// Normalized moment-measure weight of each atom. Exact in dimensions 1 and 2; otherwise
// importance sampling with `samples` draws from `seed`.
//
// # Safety
// `out` is writable for `len` values, `len` being the atom count.
enum MmStatus mm_moment_measure(const struct MmPotential *p,
                                size_t samples,
                                uint64_t seed,
                                double *out,
                                size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOMENT_MEASURES_H */
