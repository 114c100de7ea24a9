#ifndef UNFOLD_KIT_H
#define UNFOLD_KIT_H

/* Generated by cbindgen from the unfold-kit-capi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible entry point.
typedef enum UkStatus {
  UK_STATUS_OK = 0,
  // A required pointer argument was null.
  UK_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  UK_STATUS_INVALID_UTF8 = 2,
  // Invalid configuration (bad JSON, unknown keys, out-of-range values).
  UK_STATUS_CONFIG = 3,
  // Malformed input data.
  UK_STATUS_PARSE = 4,
  // Mismatched array lengths or feature dimensions.
  UK_STATUS_DIMENSION = 5,
  // An operation received an empty sample it cannot work with.
  UK_STATUS_EMPTY_INPUT = 6,
  // Classifier training failed.
  UK_STATUS_TRAINING = 7,
  // Numerical failure inside an algorithm.
  UK_STATUS_ALGORITHM = 8,
  // File input/output failure.
  UK_STATUS_IO = 9,
  // Serialization failure.
  UK_STATUS_SERIALIZATION = 10,
  // An internal panic was caught at the ABI boundary.
  UK_STATUS_PANIC = 11,
} UkStatus;

// Opaque handle to an estimated detector-response matrix.
typedef struct UkResponse UkResponse;

// Opaque handle to a generated toy dataset.
typedef struct UkToyDataset UkToyDataset;

// Opaque handle to an unfolding result.
typedef struct UkUnfoldResult UkUnfoldResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; never null, never
// freed by the caller.
const char *uk_version(void);

// Description of the most recent error on this thread, as a
// NUL-terminated string. The pointer stays valid until the next failing
// call on the same thread; do not free it.
const char *uk_last_error_message(void);

// Release a string returned by an `uk_*_json` accessor. Null is ignored.
//
// # Safety
// `s` must be a pointer previously returned by this library's string
// accessors, and must not be used afterwards.
void uk_string_free(char *s);

// Generate a toy dataset from a JSON configuration (same schema as the
// library's toy block; `"{}"` gives the 1-D defaults). Datasets with
// auxiliary smearings use the multidimensional generator and observe every
// recorded draw.
//
// # Safety
// `config_json` must point to a NUL-terminated string and `out` to a
// writable pointer slot. On success `*out` owns the dataset and must be
// released with [`uk_toy_free`].
enum UkStatus uk_toy_generate(const char *config_json, struct UkToyDataset **out);

// Release a toy dataset handle. Null is ignored.
//
// # Safety
// `ds` must be a pointer from [`uk_toy_generate`], not used afterwards.
void uk_toy_free(struct UkToyDataset *ds);

// Sample sizes of a toy dataset: measured events, background-model
// events, synthetic pairs, and truth reference events. Null count slots
// are skipped.
//
// # Safety
// `ds` must be a live handle from [`uk_toy_generate`]; non-null count
// pointers must be writable.
enum UkStatus uk_toy_counts(const struct UkToyDataset *ds,
                            size_t *n_data,
                            size_t *n_noise,
                            size_t *n_pairs,
                            size_t *n_truth);

// Unfold a toy dataset with its own measured, background, and synthetic
// samples. `config_json` uses the unfolding schema (`"{}"` for defaults).
//
// # Safety
// `ds` must be a live handle from [`uk_toy_generate`], `config_json` a
// NUL-terminated string, `out` a writable slot. On success `*out` must be
// released with [`uk_unfold_free`].
enum UkStatus uk_toy_unfold(const struct UkToyDataset *ds,
                            const char *config_json,
                            struct UkUnfoldResult **out);

// Unfold caller-provided events.
//
// Layouts: `data` is `n_data x data_dim` row-major with optional per-event
// `data_weights` (null = unit weights); `noise` is `n_noise x data_dim`
// (null only when `n_noise` is 0). The synthetic sample consists of
// `n_pairs` paired events: `gen` is `n_pairs x gen_dim` row-major, valid
// where `gen_present[i]` is non-zero; `sim` is `n_pairs x sim_dim`, valid
// where `sim_present[i]` is non-zero; `pair_weights` is optional (null =
// unit weights). `sim_dim` must equal `data_dim`.
//
// # Safety
// All non-null pointers must reference readable buffers of the stated
// lengths; `config_json` must be NUL-terminated; `out` must be writable.
// On success `*out` must be released with [`uk_unfold_free`].
enum UkStatus uk_unfold(const char *config_json,
                        const double *data,
                        const double *data_weights,
                        size_t n_data,
                        size_t data_dim,
                        const double *noise,
                        size_t n_noise,
                        const double *gen,
                        const uint8_t *gen_present,
                        size_t gen_dim,
                        const double *sim,
                        const uint8_t *sim_present,
                        size_t sim_dim,
                        const double *pair_weights,
                        size_t n_pairs,
                        struct UkUnfoldResult **out);

// Release an unfolding result. Null is ignored.
//
// # Safety
// `res` must come from an unfolding constructor, not used afterwards.
void uk_unfold_free(struct UkUnfoldResult *res);

// Number of synthetic pairs the result carries weights for; 0 on null.
//
// # Safety
// `res` must be a live result handle or null.
size_t uk_unfold_n_pairs(const struct UkUnfoldResult *res);

// Number of iterations the unfolding ran; 0 on null.
//
// # Safety
// `res` must be a live result handle or null.
size_t uk_unfold_n_iterations(const struct UkUnfoldResult *res);

// Copy the synthetic-sample weights after `iteration` (1-based) into
// `buf`, one weight per pair. `len` must equal the pair count.
//
// # Safety
// `res` must be a live result handle; `buf` must be writable for `len`
// doubles.
enum UkStatus uk_unfold_weights(const struct UkUnfoldResult *res,
                                size_t iteration,
                                double *buf,
                                size_t len);

// Copy the background-subtraction weights of the measured events into
// `buf`. `len` must equal the measured-event count.
//
// # Safety
// `res` must be a live result handle; `buf` must be writable for `len`
// doubles.
enum UkStatus uk_unfold_data_weights(const struct UkUnfoldResult *res, double *buf, size_t len);

// The run diagnostics as a JSON string; release with [`uk_string_free`].
// Returns null on failure.
//
// # Safety
// `res` must be a live result handle.
char *uk_unfold_diagnostics_json(const struct UkUnfoldResult *res);

// Estimate a one-dimensional response matrix from paired events. `gen`
// and `sim` hold one value per pair, valid where the matching presence
// mask is non-zero; `weights` is optional (null = unit). Edges must be
// strictly increasing arrays of `n_gen_edges` / `n_sim_edges` values.
//
// # Safety
// All non-null pointers must reference readable buffers of the stated
// lengths; `out` must be writable. On success `*out` must be released
// with [`uk_response_free`].
enum UkStatus uk_response_estimate(const double *gen,
                                   const uint8_t *gen_present,
                                   const double *sim,
                                   const uint8_t *sim_present,
                                   const double *weights,
                                   size_t n_pairs,
                                   const double *gen_edges,
                                   size_t n_gen_edges,
                                   const double *sim_edges,
                                   size_t n_sim_edges,
                                   struct UkResponse **out);

// Release a response handle. Null is ignored.
//
// # Safety
// `resp` must come from [`uk_response_estimate`], not used afterwards.
void uk_response_free(struct UkResponse *resp);

// Bin counts of a response matrix. Null slots are skipped.
//
// # Safety
// `resp` must be a live response handle; non-null count pointers must be
// writable.
enum UkStatus uk_response_bins(const struct UkResponse *resp, size_t *n_gen, size_t *n_sim);

// Run iterative Bayesian unfolding against a response matrix. `data`
// holds the measured histogram (`n_sim` bins), `noise` an optional
// background histogram to subtract (null = none), and the result is
// written to `out_unfolded` (`n_gen` bins).
//
// # Safety
// `resp` must be a live response handle; `data` must hold the detector
// bin count, `noise` the same when non-null; `out_unfolded` must be
// writable for the generator bin count.
enum UkStatus uk_ibu(const struct UkResponse *resp,
                     const double *data,
                     const double *noise,
                     size_t n_iterations,
                     double *out_unfolded);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNFOLD_KIT_H */
