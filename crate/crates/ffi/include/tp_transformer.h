#ifndef TP_TRANSFORMER_H
#define TP_TRANSFORMER_H

/* Generated by cbindgen from the tp-transformer-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TptStatus {
  TPT_STATUS_OK = 0,
  TPT_STATUS_NULL_ARGUMENT = 1,
  TPT_STATUS_INVALID_UTF8 = 2,
  TPT_STATUS_IO = 3,
  TPT_STATUS_FORMAT = 4,
  TPT_STATUS_VOCABULARY = 5,
  TPT_STATUS_LENGTH = 6,
  TPT_STATUS_CONFIG = 7,
  TPT_STATUS_NUMERICAL = 8,
  TPT_STATUS_BUFFER_TOO_SMALL = 9,
  TPT_STATUS_INTERNAL = 10,
} TptStatus;

/**
 * A loaded checkpoint.
 */
typedef struct TptModel TptModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to fit) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t tpt_last_error(char *buf, size_t cap);

/**
 * Loads a checkpoint file into a new handle stored in `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TptStatus tpt_model_load(const char *path, struct TptModel **out);

/**
 * Releases a handle from [`tpt_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tpt_model_free(struct TptModel *model);

/**
 * Vocabulary size, hidden size, head count, layer count and training step
 * of a loaded model. Null output pointers are skipped.
 *
 * # Safety
 * `model` must be a live handle; outputs must be null or valid.
 */
enum TptStatus tpt_model_info(const struct TptModel *model,
                              size_t *vocab_size,
                              size_t *d_model,
                              size_t *heads,
                              size_t *layers,
                              uint64_t *step);

/**
 * Greedy answer to `question`, written NUL-terminated into `buf`.
 * `needed` receives the answer length in bytes and `truncated` whether
 * decoding stopped at `max_steps`; either may be null.
 *
 * # Safety
 * `model` must be a live handle, `question` a NUL-terminated string and
 * `buf` null or `cap` writable bytes.
 */
enum TptStatus tpt_decode(const struct TptModel *model,
                          const char *question,
                          size_t max_steps,
                          char *buf,
                          size_t cap,
                          size_t *needed,
                          bool *truncated);

/**
 * Exact-match accuracy over a dataset file.
 *
 * # Safety
 * `model` must be a live handle, `path` a NUL-terminated string and
 * `accuracy` a valid pointer.
 */
enum TptStatus tpt_evaluate(const struct TptModel *model, const char *path, double *accuracy);

/**
 * Swapped-pairing collision rates without (`standard_rate`) and with
 * (`tp_rate`) role binding over `trials` random scenarios of size `dim`.
 *
 * # Safety
 * Both outputs must be valid pointers.
 */
enum TptStatus tpt_binding_demo(size_t dim,
                                uint64_t seed,
                                size_t trials,
                                double *standard_rate,
                                double *tp_rate);

/**
 * Largest deviation between `diag(Mᵀ v rᵀ N)` and `(Mᵀv) ⊙ (Nᵀr)` over
 * `trials` random draws, general and orthonormal maps combined.
 *
 * # Safety
 * `max_deviation` must be a valid pointer.
 */
enum TptStatus tpt_hadamard_check(size_t d_model,
                                  size_t d_head,
                                  uint64_t seed,
                                  size_t trials,
                                  double *max_deviation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TP_TRANSFORMER_H */
