#ifndef MRBM_H
#define MRBM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum MrbmStatus {
  MRBM_STATUS_OK = 0,
  MRBM_STATUS_NULL_POINTER = 1,
  MRBM_STATUS_IO = 2,
  MRBM_STATUS_FORMAT = 3,
  MRBM_STATUS_DIMENSION = 4,
  MRBM_STATUS_INVALID_ARGUMENT = 5,
  MRBM_STATUS_NUMERICAL = 6,
  MRBM_STATUS_WRONG_MODEL_KIND = 7,
  MRBM_STATUS_PANIC = 8,
} MrbmStatus;

/**
 * Kind of model behind a handle.
 */
typedef enum MrbmModelKind {
  /**
   * A lone Beta RBM (background or baseline model).
   */
  MRBM_MODEL_KIND_BETA_RBM = 0,
  /**
   * Foreground mixed RBM plus background Beta RBM.
   */
  MRBM_MODEL_KIND_MASKED = 1,
} MrbmModelKind;

/**
 * Opaque model handle.
 */
typedef struct MrbmModel MrbmModel;

/**
 * Gibbs settings for [`mrbm_segment`].
 */
typedef struct MrbmSegmentOptions {
  uint32_t sweeps;
  uint32_t burn_in;
  /**
   * Outlier prior; ignored unless `use_outliers` is nonzero.
   */
  double outlier_p;
  uint8_t use_outliers;
  uint64_t seed;
} MrbmSegmentOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL if the last call
 * succeeded. The pointer stays valid until the next call into this library
 * on the same thread.
 */
const char *mrbm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mrbm_version(void);

/**
 * Loads a model container from `path` into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MrbmStatus mrbm_model_load(const char *path, struct MrbmModel **out);

/**
 * Parses a model container held in memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` must be valid.
 */
enum MrbmStatus mrbm_model_from_bytes(const uint8_t *bytes, size_t len, struct MrbmModel **out);

/**
 * Writes the model to `path` in the container format.
 *
 * # Safety
 * `model` must come from this library and `path` must be NUL-terminated.
 */
enum MrbmStatus mrbm_model_save(const struct MrbmModel *model, const char *path);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and must not be used afterwards.
 */
void mrbm_model_free(struct MrbmModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MrbmStatus mrbm_model_kind(const struct MrbmModel *model, enum MrbmModelKind *out);

/**
 * Number of pixels per image the model expects.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MrbmStatus mrbm_model_n_pixels(const struct MrbmModel *model, size_t *out);

/**
 * Hidden units of the Beta RBM, or of the foreground RBM for masked models.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MrbmStatus mrbm_model_n_hidden(const struct MrbmModel *model, size_t *out);

/**
 * 100 sweeps, 50 burn-in, outliers on with p = 0.3, seed 0.
 */
struct MrbmSegmentOptions mrbm_segment_options_default(void);

/**
 * Segments one image (pixels in `[0, 1]`, row-major). Writes per-pixel mask
 * probabilities to `mask_out` and, when `hidden_out` is not NULL, the
 * posterior-mean foreground hidden activations.
 *
 * Calls with the same seed and `stream_index` are reproducible; use the
 * image's index in a batch as `stream_index` to match the command-line tool.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum MrbmStatus mrbm_segment(const struct MrbmModel *model,
                             const double *image,
                             size_t n_pixels,
                             const struct MrbmSegmentOptions *options,
                             uint64_t stream_index,
                             double *mask_out,
                             double *hidden_out,
                             size_t n_hidden);

/**
 * Hidden-unit means of a Beta RBM model for one image.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum MrbmStatus mrbm_hidden_means(const struct MrbmModel *model,
                                  const double *image,
                                  size_t n_pixels,
                                  double *hidden_out,
                                  size_t n_hidden);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRBM_H */
