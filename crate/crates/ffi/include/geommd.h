#ifndef GEOMMD_H
#define GEOMMD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GmKernelFamily {
  GM_KERNEL_FAMILY_RATIONAL_QUADRATIC = 0,
  GM_KERNEL_FAMILY_GAUSSIAN_RBF = 1,
  GM_KERNEL_FAMILY_LINEAR = 2,
  GM_KERNEL_FAMILY_POLYNOMIAL2 = 3,
} GmKernelFamily;

typedef enum GmStatus {
  GM_STATUS_OK = 0,
  GM_STATUS_NULL_POINTER = 1,
  GM_STATUS_INVALID_ARGUMENT = 2,
  GM_STATUS_DEGENERATE_SAMPLE = 3,
  GM_STATUS_ZERO_VARIANCE = 4,
  GM_STATUS_NON_FINITE = 5,
  GM_STATUS_CONFIG = 6,
  GM_STATUS_FORMAT = 7,
  GM_STATUS_IO = 8,
  GM_STATUS_PANIC = 9,
} GmStatus;

typedef enum GmDirection {
  GM_DIRECTION_X = 0,
  GM_DIRECTION_Y = 1,
} GmDirection;

typedef struct GmEncoder GmEncoder;

typedef struct GmGenerator GmGenerator;

typedef struct GmGrid GmGrid;

/**
 * Kernel description. For the rational quadratic kernel a non-positive
 * `length_scale` selects the median heuristic; `gamma` is used only by the
 * Gaussian RBF kernel.
 */
typedef struct GmKernel {
  enum GmKernelFamily family;
  double alpha;
  double length_scale;
  double gamma;
} GmKernel;

typedef struct GmSynthParams {
  size_t out_height;
  size_t out_width;
  size_t patch_size;
  size_t patches_per_iter;
  size_t iterations;
  double learning_rate;
  uint64_t seed;
  struct GmKernel kernel;
} GmSynthParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gm_last_error_message(void);

/**
 * Defaults matching the library's desk-scale synthesis settings.
 */
struct GmSynthParams gm_synth_params_default(void);

/**
 * Create a `height × width` grid from row-major `values` (or zeros when
 * `values` is NULL).
 *
 * # Safety
 * `values` must be NULL or point to `height * width` doubles; `out` must be
 * a valid pointer.
 */
enum GmStatus gm_grid_new(size_t height, size_t width, const double *values, struct GmGrid **out);

/**
 * # Safety
 * `grid` must be NULL or a handle not yet freed.
 */
void gm_grid_free(struct GmGrid *grid);

/**
 * # Safety
 * `grid` must be NULL or a live handle.
 */
size_t gm_grid_height(const struct GmGrid *grid);

/**
 * # Safety
 * `grid` must be NULL or a live handle.
 */
size_t gm_grid_width(const struct GmGrid *grid);

/**
 * Copy the row-major pixel values into `out` (capacity `len`).
 *
 * # Safety
 * `grid` must be a live handle and `out` must hold `len` doubles.
 */
enum GmStatus gm_grid_values(const struct GmGrid *grid, double *out, size_t len);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GmStatus gm_pgm_read(const char *path, struct GmGrid **out);

/**
 * # Safety
 * `grid` must be a live handle and `path` a NUL-terminated string.
 */
enum GmStatus gm_pgm_write(const struct GmGrid *grid, const char *path);

/**
 * Procedural binary channel image.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmStatus gm_make_channel_exemplar(size_t height,
                                       size_t width,
                                       double channel_fraction,
                                       uint64_t seed,
                                       struct GmGrid **out);

/**
 * Encoder that passes `dim`-dimensional patches through unchanged.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmStatus gm_encoder_identity(size_t dim, struct GmEncoder **out);

/**
 * Fit a PCA encoder with `code_dim` components on `count` random
 * `patch_size²` patches of `exemplar` reflect-padded by `pad`.
 *
 * # Safety
 * `exemplar` must be a live handle and `out` a valid pointer.
 */
enum GmStatus gm_encoder_fit_pca(const struct GmGrid *exemplar,
                                 size_t patch_size,
                                 size_t pad,
                                 size_t count,
                                 size_t code_dim,
                                 uint64_t seed,
                                 struct GmEncoder **out);

/**
 * Load an encoder written by `geommd fit-encoder`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GmStatus gm_encoder_load(const char *path, struct GmEncoder **out);

/**
 * # Safety
 * `encoder` must be NULL or a live handle.
 */
size_t gm_encoder_code_dim(const struct GmEncoder *encoder);

/**
 * # Safety
 * `encoder` must be NULL or a handle not yet freed.
 */
void gm_encoder_free(struct GmEncoder *encoder);

/**
 * MMD² between `count` patches of `a` and `count` patches of `b`. Both sides
 * are drawn with the same `seed`.
 *
 * # Safety
 * `a`, `b`, `encoder` and `kernel` must be live; `out_value` must be valid.
 */
enum GmStatus gm_mmd2(const struct GmGrid *a,
                      const struct GmGrid *b,
                      const struct GmEncoder *encoder,
                      const struct GmKernel *kernel,
                      size_t patch_size,
                      size_t pad,
                      size_t count,
                      uint64_t seed,
                      double *out_value);

/**
 * Optimization-based synthesis. When `trace` is non-NULL it receives the
 * per-iteration MMD² and must hold `params->iterations` doubles.
 *
 * # Safety
 * Handles and `params` must be live; `out` must be valid; `trace` must be
 * NULL or large enough.
 */
enum GmStatus gm_synthesize(const struct GmGrid *exemplar,
                            const struct GmEncoder *encoder,
                            const struct GmSynthParams *params,
                            struct GmGrid **out,
                            double *trace);

/**
 * Load a generator written by `geommd train-gen`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GmStatus gm_generator_load(const char *path, struct GmGenerator **out);

/**
 * # Safety
 * `generator` must be NULL or a handle not yet freed.
 */
void gm_generator_free(struct GmGenerator *generator);

/**
 * Draw `count` realizations into `out[0..count]`; each must later be freed
 * with `gm_grid_free`. Nothing is written on failure.
 *
 * # Safety
 * `generator` must be live and `out` must hold `count` pointers.
 */
enum GmStatus gm_generator_sample(const struct GmGenerator *generator,
                                  size_t count,
                                  uint64_t seed,
                                  struct GmGrid **out);

/**
 * Two-point probability `S₂(0..=max_lag)` into `out` (capacity `len`).
 *
 * # Safety
 * `grid` must be live and `out` must hold `len` doubles.
 */
enum GmStatus gm_two_point_pf(const struct GmGrid *grid,
                              enum GmDirection direction,
                              size_t max_lag,
                              double threshold,
                              double *out,
                              size_t len);

/**
 * Normalized `bins`-bin histogram over `[-1, 1]` into `out` (capacity `len`).
 *
 * # Safety
 * `grid` must be live and `out` must hold `len` doubles.
 */
enum GmStatus gm_histogram(const struct GmGrid *grid, size_t bins, double *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOMMD_H */
