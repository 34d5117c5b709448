#ifndef MCDL_H
#define MCDL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum McdlStatus {
  MCDL_STATUS_OK = 0,
  MCDL_STATUS_NULL_POINTER = 1,
  MCDL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed model, sample, or bitstream input.
   */
  MCDL_STATUS_PARSE = 3,
  /**
   * Subset is intractable or not a tree where one is required.
   */
  MCDL_STATUS_INTRACTABLE = 4,
  /**
   * Bitstream was produced under a different model or geometry.
   */
  MCDL_STATUS_DIGEST_MISMATCH = 5,
  MCDL_STATUS_IO = 6,
  /**
   * Output buffer length does not match.
   */
  MCDL_STATUS_BUFFER_SIZE = 7,
  MCDL_STATUS_PANIC = 8,
} McdlStatus;

/**
 * Model with its parameter tying.
 */
typedef struct McdlModel McdlModel;

/**
 * Empirical MCDL objective in the free parameters of a tying.
 */
typedef struct McdlObjective McdlObjective;

/**
 * Sample sequence over one subset closure.
 */
typedef struct McdlSamples McdlSamples;

/**
 * Outcome of [`mcdl_objective_minimize`].
 */
typedef struct McdlMinimizeResult {
  double objective_nats;
  double objective_bits_per_site;
  double gradient_inf_norm;
  size_t iterations;
  bool converged;
} McdlMinimizeResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mcdl_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *mcdl_version(void);

/**
 * Builds a model from the JSON model-file format.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum McdlStatus mcdl_model_from_json(const char *json, struct McdlModel **out);

/**
 * Homogeneous grid model; the single free parameter is the shared edge
 * coupling, node parameters stay fixed.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum McdlStatus mcdl_model_homogeneous(size_t height,
                                       size_t width,
                                       bool toroidal,
                                       double node_param,
                                       double edge_param,
                                       struct McdlModel **out);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void mcdl_model_free(struct McdlModel *model);

/**
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t mcdl_model_node_count(const struct McdlModel *model);

/**
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t mcdl_model_edge_count(const struct McdlModel *model);

/**
 * Number of free parameters under the model's tying.
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t mcdl_model_free_count(const struct McdlModel *model);

/**
 * Runs the Gibbs sampler. `subset` uses the CLI syntax (`middle-row`,
 * `row:K`, `site:R,C`, `nodes:a,b`, `all`).
 *
 * # Safety
 * Pointers must be valid; `subset` nul-terminated.
 */
enum McdlStatus mcdl_samples_generate(const struct McdlModel *model,
                                      const char *subset,
                                      size_t n,
                                      size_t burn_in,
                                      size_t spacing,
                                      uint64_t seed,
                                      struct McdlSamples **out);

/**
 * Parses sample-file text against the model's graph.
 *
 * # Safety
 * Pointers must be valid; `text` nul-terminated.
 */
enum McdlStatus mcdl_samples_parse(const struct McdlModel *model,
                                   const char *text_in,
                                   struct McdlSamples **out);

/**
 * Serializes to sample-file text. Release with [`mcdl_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum McdlStatus mcdl_samples_to_text(const struct McdlSamples *samples,
                                     const struct McdlModel *model,
                                     char **out);

/**
 * # Safety
 * `samples` must be a live handle or null (returns 0).
 */
size_t mcdl_samples_len(const struct McdlSamples *samples);

/**
 * Closure size: the number of spins stored per configuration.
 *
 * # Safety
 * `samples` must be a live handle or null (returns 0).
 */
size_t mcdl_samples_closure_len(const struct McdlSamples *samples);

/**
 * Subset size: the number of spins coded per configuration.
 *
 * # Safety
 * `samples` must be a live handle or null (returns 0).
 */
size_t mcdl_samples_subset_len(const struct McdlSamples *samples);

/**
 * # Safety
 * `samples` must come from this library or be null.
 */
void mcdl_samples_free(struct McdlSamples *samples);

/**
 * Objective over every configuration of `samples` on its own subset.
 *
 * # Safety
 * Pointers must be valid.
 */
enum McdlStatus mcdl_objective_temporal(const struct McdlModel *model,
                                        const struct McdlSamples *samples,
                                        struct McdlObjective **out);

/**
 * Objective over many subsets of one full configuration (`samples` must
 * cover the whole grid). `family` is `rows`, `rows:A-B`, or `sites`.
 *
 * # Safety
 * Pointers must be valid; `family` nul-terminated.
 */
enum McdlStatus mcdl_objective_spatial(const struct McdlModel *model,
                                       const struct McdlSamples *samples,
                                       size_t index,
                                       const char *family,
                                       struct McdlObjective **out);

/**
 * # Safety
 * `objective` must be a live handle or null (returns 0).
 */
size_t mcdl_objective_free_count(const struct McdlObjective *objective);

/**
 * Objective value in nats at the free parameters `theta[0..len]`.
 *
 * # Safety
 * Pointers must be valid for the given lengths.
 */
enum McdlStatus mcdl_objective_value(const struct McdlObjective *objective,
                                     const double *theta,
                                     size_t len,
                                     double *value);

/**
 * Gradient written to `grad[0..len]`; `len` must equal the free count.
 *
 * # Safety
 * Pointers must be valid for `len` elements.
 */
enum McdlStatus mcdl_objective_gradient(const struct McdlObjective *objective,
                                        const double *theta,
                                        size_t len,
                                        double *grad);

/**
 * Gradient descent from `theta` (in/out, `len` free parameters). Returns
 * `Ok` even without convergence; check `result->converged`.
 *
 * # Safety
 * Pointers must be valid; `theta` for `len` elements.
 */
enum McdlStatus mcdl_objective_minimize(const struct McdlObjective *objective,
                                        double grad_tol,
                                        size_t max_iters,
                                        double *theta,
                                        size_t len,
                                        struct McdlMinimizeResult *result);

/**
 * Evaluates a one-parameter objective at `count` evenly spaced points of
 * `[lo, hi]`, writing values (nats) to `values[0..count]` and the grid
 * minimizer to `argmin`.
 *
 * # Safety
 * Pointers must be valid; `values` for `count` elements.
 */
enum McdlStatus mcdl_objective_sweep(const struct McdlObjective *objective,
                                     double lo,
                                     double hi,
                                     size_t count,
                                     double *values,
                                     double *argmin);

/**
 * # Safety
 * `objective` must come from this library or be null.
 */
void mcdl_objective_free(struct McdlObjective *objective);

/**
 * Encodes configuration `index` of `samples` given its boundary. The
 * bitstream file bytes are returned in `*bytes`/`*len`; release with
 * [`mcdl_bytes_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum McdlStatus mcdl_encode(const struct McdlModel *model,
                            const struct McdlSamples *samples,
                            size_t index,
                            uint8_t **bytes,
                            size_t *len);

/**
 * Decodes a bitstream using the boundary of configuration `index` of
 * `samples`; writes `subset_len` spins (+1/-1) to `spins`.
 *
 * # Safety
 * Pointers must be valid for their lengths.
 */
enum McdlStatus mcdl_decode(const struct McdlModel *model,
                            const struct McdlSamples *samples,
                            size_t index,
                            const uint8_t *bytes,
                            size_t len,
                            int8_t *spins,
                            size_t subset_len);

/**
 * Runs `trials` randomized tree-inference checks against enumeration.
 *
 * # Safety
 * `passed` must be a valid pointer.
 */
enum McdlStatus mcdl_oracle_check(size_t trials, size_t max_subset, uint64_t seed, size_t *passed);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void mcdl_string_free(char *s);

/**
 * # Safety
 * `bytes`/`len` must be exactly as returned by [`mcdl_encode`].
 */
void mcdl_bytes_free(uint8_t *bytes, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCDL_H */
