#ifndef RELQ_H
#define RELQ_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RQ_MODE_STREAMING 0

#define RQ_MODE_MERGEABLE 1

#define RQ_MODE_HIGH_CONFIDENCE 2

typedef enum RqStatus {
  RQ_STATUS_OK = 0,
  RQ_STATUS_NULL_POINTER = 1,
  RQ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * NaN item.
   */
  RQ_STATUS_INVALID_ITEM = 3,
  /**
   * More items than the declared stream length.
   */
  RQ_STATUS_BOUND_EXCEEDED = 4,
  RQ_STATUS_EMPTY = 5,
  RQ_STATUS_OUT_OF_RANGE = 6,
  /**
   * The two sketches cannot be merged.
   */
  RQ_STATUS_INCOMPATIBLE = 7,
  RQ_STATUS_DECODE = 8,
  RQ_STATUS_PANIC = 9,
} RqStatus;

/**
 * Opaque sketch handle.
 */
typedef struct RqSketch RqSketch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a sketch. `n` is the stream length for the streaming and
 * high-confidence modes and is ignored by the mergeable mode.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum RqStatus rq_sketch_new(uint8_t mode,
                            double eps,
                            double delta,
                            uint64_t n,
                            uint64_t seed,
                            struct RqSketch **out);

/**
 * # Safety
 * `sketch` must be null or a handle not yet freed.
 */
void rq_sketch_free(struct RqSketch *sketch);

/**
 * # Safety
 * `sketch` must be a live handle.
 */
enum RqStatus rq_sketch_update(struct RqSketch *sketch, double item);

/**
 * Estimated number of items `<= y`.
 *
 * # Safety
 * `sketch` must be a live handle and `out` valid for writes.
 */
enum RqStatus rq_sketch_rank(const struct RqSketch *sketch, double y, uint64_t *out);

/**
 * Smallest stored item whose estimated rank is at least `r`, for `1 <= r <= n`.
 *
 * # Safety
 * `sketch` must be a live handle and `out` valid for writes.
 */
enum RqStatus rq_sketch_quantile(const struct RqSketch *sketch, uint64_t r, double *out);

/**
 * # Safety
 * `sketch` must be a live handle and `out` valid for writes.
 */
enum RqStatus rq_sketch_n(const struct RqSketch *sketch, uint64_t *out);

/**
 * # Safety
 * `sketch` must be a live handle and `out` valid for writes.
 */
enum RqStatus rq_sketch_stored_items(const struct RqSketch *sketch, uint64_t *out);

/**
 * Merges `source` into `target`. `source` is left unchanged; on error
 * `target` is unchanged too.
 *
 * # Safety
 * Both must be live handles; they may not be the same handle.
 */
enum RqStatus rq_sketch_merge(struct RqSketch *target, const struct RqSketch *source);

/**
 * Serializes into a new buffer released with `rq_bytes_free`.
 *
 * # Safety
 * `sketch` must be a live handle; `data` and `len` valid for writes.
 */
enum RqStatus rq_sketch_serialize(const struct RqSketch *sketch, uint8_t **data, size_t *len);

/**
 * # Safety
 * `data` and `len` must come from one `rq_sketch_serialize` call, or
 * `data` must be null.
 */
void rq_bytes_free(uint8_t *data, size_t len);

/**
 * # Safety
 * `data` must be readable for `len` bytes and `out` valid for writes.
 */
enum RqStatus rq_sketch_deserialize(const uint8_t *data, size_t len, struct RqSketch **out);

/**
 * Static, NUL-terminated description of a status code.
 */
const char *rq_status_message(enum RqStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELQ_H */
