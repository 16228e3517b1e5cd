#ifndef METASTAB_H
#define METASTAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MetastabStatus {
  METASTAB_STATUS_OK = 0,
  METASTAB_STATUS_NULL_POINTER = 1,
  METASTAB_STATUS_INVALID_INPUT = 2,
  METASTAB_STATUS_BUFFER_TOO_SMALL = 3,
  METASTAB_STATUS_NOT_IRREDUCIBLE = 4,
  METASTAB_STATUS_NOT_REVERSIBLE = 5,
  METASTAB_STATUS_SOLVER_FAILURE = 6,
  METASTAB_STATUS_PANIC = 7,
} MetastabStatus;

/**
 * Opaque chain handle.
 */
typedef struct MetastabChain MetastabChain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an irreducible chain on states `0..n` from `m` edges
 * `from[k] -> to[k]` with rate `rates[k]`. On success `*out` owns a handle
 * to be released with `metastab_chain_free`.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_chain_new(size_t n,
                                       const size_t *from,
                                       const size_t *to,
                                       const double *rates,
                                       size_t m,
                                       struct MetastabChain **out);

/**
 * Builds the chain of a builtin family (or a TOML family file) at scale `n`.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_chain_from_family(const char *name,
                                               double n,
                                               struct MetastabChain **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
void metastab_chain_free(struct MetastabChain *chain);

/**
 * Number of states; 0 for a null handle.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
size_t metastab_chain_len(const struct MetastabChain *chain);

/**
 * Writes the stationary probability vector into `out[0..n]`.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_stationary(const struct MetastabChain *chain, double *out, size_t len);

/**
 * Writes 1 to `*out` if the stationary measure is reversible, else 0.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_is_reversible(const struct MetastabChain *chain, int32_t *out);

/**
 * Capacity between disjoint sets A and B (reversible chains).
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_capacity(const struct MetastabChain *chain,
                                      const size_t *a,
                                      size_t a_len,
                                      const size_t *b,
                                      size_t b_len,
                                      double *out);

/**
 * Equilibrium potential `P_x[T_A < T_B]` into `out[0..n]`.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_equilibrium_potential(const struct MetastabChain *chain,
                                                   const size_t *a,
                                                   size_t a_len,
                                                   const size_t *b,
                                                   size_t b_len,
                                                   double *out,
                                                   size_t len);

/**
 * Trace rates on F as a dense row-major `k x k` matrix, states of F in
 * increasing order with duplicates removed; zero diagonal.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_trace_rates(const struct MetastabChain *chain,
                                         const size_t *f,
                                         size_t f_len,
                                         double *out,
                                         size_t len);

/**
 * Depth of the valley (well, basin, attractor) and its escape rate.
 *
 * # Safety
 * Pointer arguments are null or valid for their stated lengths; handles come from this library.
 */
enum MetastabStatus metastab_valley_depth(const struct MetastabChain *chain,
                                          const size_t *well,
                                          size_t well_len,
                                          const size_t *basin,
                                          size_t basin_len,
                                          size_t attractor,
                                          double *depth,
                                          double *rate);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *metastab_last_error(void);

/**
 * Library version, NUL-terminated and static.
 */
const char *metastab_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METASTAB_H */
