#ifndef CVBENCH_H
#define CVBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CvStatus {
  CV_STATUS_OK = 0,
  CV_STATUS_NULL_POINTER = 1,
  CV_STATUS_INVALID_INPUT = 2,
  CV_STATUS_NOT_COMPLETELY_POSITIVE = 3,
  CV_STATUS_CSV = 4,
  CV_STATUS_NUMERICS = 5,
  CV_STATUS_UNSUPPORTED = 6,
  CV_STATUS_IO = 7,
  CV_STATUS_PANIC = 8,
} CvStatus;

typedef struct CvChannel CvChannel;

typedef struct CvDataset CvDataset;

typedef struct CvReport CvReport;

typedef struct CvState CvState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cv_version(void);

/**
 * Message for the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cv_last_error_message(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void cv_string_free(char *s);

/**
 * Best classical average fidelity for `n_copies` input copies.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CvStatus cv_classical_bound(double eta, double lambda, uint32_t n_copies, double *out);

/**
 * Single-copy threshold on the mean quadrature variance.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CvStatus cv_quadrature_threshold(double eta, double lambda, double *out);

/**
 * Flat-prior fidelity of the quantum-limited amplifier, for `eta > 1`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CvStatus cv_quantum_amp_bound(double eta, double *out);

/**
 * Parses a channel. JSON with a `"type"` key is a channel model, otherwise
 * a raw `{"K", "M", "disp"}` Gaussian channel.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum CvStatus cv_channel_from_json(const char *json, struct CvChannel **out);

/**
 * Raw Gaussian channel from row-major 2x2 `k` and `m`; `disp` may be NULL.
 *
 * # Safety
 * `k` and `m` must point to 4 doubles, `disp` to 2 or be NULL.
 */
enum CvStatus cv_channel_from_matrices(const double *k,
                                       const double *m,
                                       const double *disp,
                                       struct CvChannel **out);

/**
 * Channel applying `first`, then `second`.
 *
 * # Safety
 * Handles must be live; `out` must be valid for writes.
 */
enum CvStatus cv_channel_compose(const struct CvChannel *second,
                                 const struct CvChannel *first,
                                 struct CvChannel **out);

/**
 * # Safety
 * `ch` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_channel_is_cp(const struct CvChannel *ch, bool *out);

/**
 * Closed-form average fidelity over the Gaussian ensemble.
 *
 * # Safety
 * `ch` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_channel_average_fidelity(const struct CvChannel *ch,
                                          double eta,
                                          double lambda,
                                          double *out);

/**
 * Average fidelity in the truncated Fock basis. Needs a channel model;
 * `cutoff` 0 selects the cutoff automatically. `error_estimate` may be NULL.
 *
 * # Safety
 * `ch` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_channel_average_fidelity_fock(const struct CvChannel *ch,
                                               double eta,
                                               double lambda,
                                               size_t cutoff,
                                               double *out,
                                               double *error_estimate);

/**
 * Channel as JSON; free the result with `cv_string_free`. NULL on failure.
 *
 * # Safety
 * `ch` must be live.
 */
char *cv_channel_to_json(const struct CvChannel *ch);

/**
 * # Safety
 * `ch` must come from this library and not be freed twice.
 */
void cv_channel_free(struct CvChannel *ch);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum CvStatus cv_state_coherent(double re, double im, struct CvState **out);

/**
 * Gaussian state from mean `d` (2 doubles) and row-major covariance (4).
 *
 * # Safety
 * Pointers must reference the stated number of doubles.
 */
enum CvStatus cv_state_new(const double *d, const double *gamma, struct CvState **out);

/**
 * # Safety
 * Handles must be live; `out` must be valid for writes.
 */
enum CvStatus cv_state_apply(const struct CvChannel *ch,
                             const struct CvState *state,
                             struct CvState **out);

/**
 * Fidelity of the state with the coherent state `re + i im`.
 *
 * # Safety
 * `state` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_state_fidelity_to_coherent(const struct CvState *state,
                                            double re,
                                            double im,
                                            double *out);

/**
 * Copies the mean (2 doubles) and row-major covariance (4 doubles).
 *
 * # Safety
 * `state` must be live; `d` and `gamma` must hold 2 and 4 doubles.
 */
enum CvStatus cv_state_moments(const struct CvState *state, double *d, double *gamma);

/**
 * # Safety
 * `state` must come from this library and not be freed twice.
 */
void cv_state_free(struct CvState *state);

/**
 * Dataset from CSV text (`alpha_re,alpha_im,quad_label,value`).
 *
 * # Safety
 * `csv` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum CvStatus cv_dataset_from_csv(const char *csv, double lambda, struct CvDataset **out);

/**
 * Dataset from a CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum CvStatus cv_dataset_from_csv_file(const char *path, double lambda, struct CvDataset **out);

/**
 * # Safety
 * `ds` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_dataset_sample_count(const struct CvDataset *ds, size_t *out);

/**
 * # Safety
 * `ds` must come from this library and not be freed twice.
 */
void cv_dataset_free(struct CvDataset *ds);

/**
 * Variance-based certification. Pass NaN as `eta` to estimate the gain
 * from the data.
 *
 * # Safety
 * `ds` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_certify_variance(const struct CvDataset *ds,
                                  double eta,
                                  double lambda,
                                  double k,
                                  size_t bootstrap,
                                  uint64_t seed,
                                  struct CvReport **out);

/**
 * 1 for QUANTUM_DOMAIN, 0 for NOT_CERTIFIED.
 *
 * # Safety
 * `r` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_report_verdict(const struct CvReport *r, int32_t *out);

/**
 * Statistic minus bound, oriented so that positive favours the quantum domain.
 *
 * # Safety
 * `r` must be live; `out` must be valid for writes.
 */
enum CvStatus cv_report_margin(const struct CvReport *r, double *out);

/**
 * Report as JSON; free with `cv_string_free`. NULL on failure.
 *
 * # Safety
 * `r` must be live.
 */
char *cv_report_to_json(const struct CvReport *r);

/**
 * # Safety
 * `r` must come from this library and not be freed twice.
 */
void cv_report_free(struct CvReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVBENCH_H */
