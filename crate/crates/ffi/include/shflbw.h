#ifndef SHFLBW_H
#define SHFLBW_H

/* Generated by cbindgen. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every exported function.
 */
typedef enum ShflbwStatus {
  SHFLBW_STATUS_OK = 0,
  SHFLBW_STATUS_NULL_POINTER = 1,
  SHFLBW_STATUS_SHAPE_MISMATCH = 2,
  SHFLBW_STATUS_NON_CONFORMANT_MASK = 3,
  SHFLBW_STATUS_BAD_PARAMS = 4,
  SHFLBW_STATUS_BAD_GEOMETRY = 5,
  SHFLBW_STATUS_INVALID_VALUE = 6,
  SHFLBW_STATUS_BAD_MAGIC = 7,
  SHFLBW_STATUS_UNSUPPORTED_VERSION = 8,
  SHFLBW_STATUS_CORRUPT_PAYLOAD = 9,
  SHFLBW_STATUS_IO = 10,
  SHFLBW_STATUS_WRONG_KIND = 11,
  SHFLBW_STATUS_PANIC = 12,
} ShflbwStatus;

/**
 * Pattern selector for [`shflbw_validate`].
 */
typedef enum ShflbwPattern {
  SHFLBW_PATTERN_UNSTRUCTURED = 0,
  SHFLBW_PATTERN_VECTOR_WISE = 1,
  SHFLBW_PATTERN_BLOCK_WISE = 2,
  SHFLBW_PATTERN_SHFL_BW = 3,
  SHFLBW_PATTERN_BALANCED = 4,
} ShflbwPattern;

typedef enum ShflbwOrder {
  SHFLBW_ORDER_LOAD_THEN_COMPUTE = 0,
  SHFLBW_ORDER_COMPUTE_THEN_LOAD = 1,
} ShflbwOrder;

/**
 * Row-major float matrix.
 */
typedef struct ShflbwDense ShflbwDense;

/**
 * Binary keep/prune mask.
 */
typedef struct ShflbwMask ShflbwMask;

/**
 * Shuffled block-wise sparse matrix.
 */
typedef struct ShflbwSparse ShflbwSparse;

/**
 * Tile shape for [`shflbw_spmm`]; pass NULL for the defaults.
 */
typedef struct ShflbwTileConfig {
  size_t tm;
  size_t tn;
  size_t tk;
} ShflbwTileConfig;

/**
 * Event counts from [`shflbw_pipeline_simulate`].
 */
typedef struct ShflbwCounters {
  size_t meta_bulk_loads;
  size_t stitches;
  size_t mmas;
  size_t hazards;
} ShflbwCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *shflbw_last_error(void);

/**
 * Version string of the library, statically allocated.
 */
const char *shflbw_version(void);

/**
 * # Safety
 * `values` must point to `rows * cols` floats; `out` must be writable.
 */
enum ShflbwStatus shflbw_dense_new(size_t rows,
                                   size_t cols,
                                   const float *values,
                                   struct ShflbwDense **out);

/**
 * # Safety
 * `m` must be NULL or a handle from this library that is not used afterwards.
 */
void shflbw_dense_free(struct ShflbwDense *m);

/**
 * # Safety
 * `m` must be a live handle; `rows` and `cols` must be writable.
 */
enum ShflbwStatus shflbw_dense_shape(const struct ShflbwDense *m, size_t *rows, size_t *cols);

/**
 * Copies the row-major values into `out`, which must hold exactly
 * `rows * cols` floats.
 *
 * # Safety
 * `m` must be a live handle and `out` must point to `len` writable floats.
 */
enum ShflbwStatus shflbw_dense_values(const struct ShflbwDense *m, float *out, size_t len);

/**
 * `bits` holds one byte per entry, row-major; nonzero means kept.
 *
 * # Safety
 * `bits` must point to `rows * cols` bytes; `out` must be writable.
 */
enum ShflbwStatus shflbw_mask_new(size_t rows,
                                  size_t cols,
                                  const uint8_t *bits,
                                  struct ShflbwMask **out);

/**
 * # Safety
 * `m` must be NULL or a handle from this library that is not used afterwards.
 */
void shflbw_mask_free(struct ShflbwMask *m);

/**
 * # Safety
 * `m` must be a live handle; `out` must point to `len` writable bytes.
 */
enum ShflbwStatus shflbw_mask_bits(const struct ShflbwMask *m, uint8_t *out, size_t len);

/**
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum ShflbwStatus shflbw_mask_popcount(const struct ShflbwMask *m, size_t *out);

/**
 * # Safety
 * `m` must be NULL or a handle from this library that is not used afterwards.
 */
void shflbw_sparse_free(struct ShflbwSparse *m);

/**
 * # Safety
 * `m` must be a live handle; the out pointers must be writable.
 */
enum ShflbwStatus shflbw_sparse_shape(const struct ShflbwSparse *m,
                                      size_t *rows,
                                      size_t *cols,
                                      size_t *vector_size);

/**
 * Copies the row permutation into `out`, which must hold `rows` entries.
 *
 * # Safety
 * `m` must be a live handle; `out` must point to `len` writable entries.
 */
enum ShflbwStatus shflbw_sparse_row_indices(const struct ShflbwSparse *m, size_t *out, size_t len);

/**
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum ShflbwStatus shflbw_sparse_to_dense(const struct ShflbwSparse *m, struct ShflbwDense **out);

/**
 * Prunes `weights` to a shuffled block-wise mask keeping a fraction `alpha`
 * per group of `v` rows. The permuted row order goes to `permutation`
 * (`rows` entries) when it is not NULL.
 *
 * # Safety
 * `weights` must be a live handle; `out_mask` and `kept_score` must be
 * writable; `permutation`, if not NULL, must hold `rows` entries.
 */
enum ShflbwStatus shflbw_prune_shflbw(const struct ShflbwDense *weights,
                                      double alpha,
                                      size_t v,
                                      uint64_t seed,
                                      struct ShflbwMask **out_mask,
                                      double *kept_score,
                                      size_t *permutation);

/**
 * # Safety
 * `weights` and `mask` must be live handles; `out` must be writable.
 */
enum ShflbwStatus shflbw_compress(const struct ShflbwDense *weights,
                                  const struct ShflbwMask *mask,
                                  size_t v,
                                  struct ShflbwSparse **out);

/**
 * Checks `mask` against a pattern. `p1` is V (or n for balanced), `p2` is m
 * for balanced and ignored otherwise.
 *
 * # Safety
 * `mask` must be a live handle; `passed` must be writable.
 */
enum ShflbwStatus shflbw_validate(const struct ShflbwMask *mask,
                                  enum ShflbwPattern pattern,
                                  size_t p1,
                                  size_t p2,
                                  bool *passed);

/**
 * `C = A * B` through the tiled executor.
 *
 * # Safety
 * `a` and `b` must be live handles; `tile` may be NULL; `out` must be writable.
 */
enum ShflbwStatus shflbw_spmm(const struct ShflbwSparse *a,
                              const struct ShflbwDense *b,
                              const struct ShflbwTileConfig *tile,
                              struct ShflbwDense **out);

/**
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum ShflbwStatus shflbw_dense_save(const struct ShflbwDense *m, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum ShflbwStatus shflbw_dense_load(const char *path, struct ShflbwDense **out);

/**
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum ShflbwStatus shflbw_mask_save(const struct ShflbwMask *m, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum ShflbwStatus shflbw_mask_load(const char *path, struct ShflbwMask **out);

/**
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum ShflbwStatus shflbw_sparse_save(const struct ShflbwSparse *m, const char *path);

/**
 * Loads a shfl-bw or vector-wise file; vector-wise gets the identity order.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum ShflbwStatus shflbw_sparse_load(const char *path, struct ShflbwSparse **out);

/**
 * Natural log of the number of ways to split `m` rows into groups of `v`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ShflbwStatus shflbw_flexibility_log_gain(size_t m, size_t v, double *out);

/**
 * Best FLOP/byte reachable at density `alpha` with `regfile_size` accumulators.
 *
 * # Safety
 * `out` must be writable.
 */
enum ShflbwStatus shflbw_max_reuse(double alpha, size_t regfile_size, double *out);

/**
 * MACs per loaded value needed to stay compute-bound on a bundled profile
 * (`"reference-A100-like"`, `"reference-T4-like"`).
 *
 * # Safety
 * `profile` must be a NUL-terminated string; `out` must be writable.
 */
enum ShflbwStatus shflbw_required_reuse(const char *profile, double *out);

/**
 * Runs the pipeline schedule for `total_steps` steps and reports counts.
 *
 * # Safety
 * `out` must be writable.
 */
enum ShflbwStatus shflbw_pipeline_simulate(size_t total_steps,
                                           size_t pipe_stage,
                                           size_t meta_prefetch_stage,
                                           enum ShflbwOrder order,
                                           size_t lead,
                                           struct ShflbwCounters *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHFLBW_H */
