#ifndef PRIVRANK_H
#define PRIVRANK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrivrankStatus {
  PRIVRANK_STATUS_OK = 0,
  PRIVRANK_STATUS_INVALID_INPUT = 1,
  PRIVRANK_STATUS_NOT_CONVERGED = 2,
  PRIVRANK_STATUS_MISSING_DATA = 3,
  PRIVRANK_STATUS_IO = 4,
  PRIVRANK_STATUS_NULL_POINTER = 5,
  PRIVRANK_STATUS_PANIC = 6,
} PrivrankStatus;

typedef enum PrivrankModel {
  PRIVRANK_MODEL_BTL = 0,
  PRIVRANK_MODEL_TM = 1,
  // Laplace threshold model; pair with a positive scale.
  PRIVRANK_MODEL_DT = 2,
} PrivrankModel;

typedef enum PrivrankMechanism {
  PRIVRANK_MECHANISM_CLASSIC_RR = 0,
  PRIVRANK_MECHANISM_ADRR = 1,
  PRIVRANK_MECHANISM_LAPLACE = 2,
} PrivrankMechanism;

// Comparison records plus an optional privacy profile.
typedef struct PrivrankDataset PrivrankDataset;

// Fitted item scores and optimizer diagnostics.
typedef struct PrivrankEstimate PrivrankEstimate;

// Per-user privacy budgets.
typedef struct PrivrankProfile PrivrankProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next privrank call on the same thread.
const char *privrank_last_error(void);

// Library version as a static NUL-terminated string.
const char *privrank_version(void);

// `F(x)` for the chosen model. `scale` is only read for `Dt`.
//
// # Safety
// `out` must be a valid pointer to a double.
enum PrivrankStatus privrank_model_cdf(enum PrivrankModel model,
                                       double scale,
                                       double x,
                                       double *out);

// `g(x) = f(x) / F(x)` for the chosen model.
//
// # Safety
// `out` must be a valid pointer to a double.
enum PrivrankStatus privrank_model_g(enum PrivrankModel model, double scale, double x, double *out);

// # Safety
// `epsilons` must point to `users` doubles; `out` must be writable.
enum PrivrankStatus privrank_profile_new(const double *epsilons,
                                         size_t users,
                                         struct PrivrankProfile **out);

// Reads a `user,epsilon` CSV.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PrivrankStatus privrank_profile_load_csv(const char *path, struct PrivrankProfile **out);

// Average retained information `B = mean(tanh(eps / 2)^2)`.
//
// # Safety
// `profile` must be a live handle; `out` must be writable.
enum PrivrankStatus privrank_profile_b(const struct PrivrankProfile *profile, double *out);

// # Safety
// `profile` must be null or a handle from this library, not yet freed.
void privrank_profile_free(struct PrivrankProfile *profile);

// Samples raw comparisons for `users` users over `items` items with scores `theta`.
//
// # Safety
// `theta` must point to `items` doubles; `out` must be writable.
enum PrivrankStatus privrank_dataset_generate(const double *theta,
                                              size_t items,
                                              enum PrivrankModel model,
                                              double scale,
                                              size_t users,
                                              double p,
                                              uint64_t seed,
                                              struct PrivrankDataset **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PrivrankStatus privrank_dataset_load_csv(const char *path, struct PrivrankDataset **out);

// # Safety
// `dataset` must be a live handle; `path` a NUL-terminated string.
enum PrivrankStatus privrank_dataset_write_csv(const struct PrivrankDataset *dataset,
                                               const char *path);

// Attaches budgets to a dataset, as needed to fit data loaded from CSV.
//
// # Safety
// Both handles must be live.
enum PrivrankStatus privrank_dataset_set_profile(struct PrivrankDataset *dataset,
                                                 const struct PrivrankProfile *profile);

// Writes the record, item and user counts; any out-pointer may be null.
//
// # Safety
// `dataset` must be a live handle.
enum PrivrankStatus privrank_dataset_shape(const struct PrivrankDataset *dataset,
                                           size_t *records,
                                           size_t *items,
                                           size_t *users);

// # Safety
// `dataset` must be null or a handle from this library, not yet freed.
void privrank_dataset_free(struct PrivrankDataset *dataset);

// Applies a local mechanism to a raw dataset. The result carries the profile.
//
// # Safety
// `raw` and `profile` must be live handles; `out` must be writable.
enum PrivrankStatus privrank_privatize(const struct PrivrankDataset *raw,
                                       const struct PrivrankProfile *profile,
                                       enum PrivrankMechanism mechanism,
                                       uint64_t seed,
                                       struct PrivrankDataset **out);

// Fits item scores. A negative `lambda` selects the default `1 / (L * B)`.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum PrivrankStatus privrank_fit(const struct PrivrankDataset *dataset,
                                 enum PrivrankModel model,
                                 double scale,
                                 double lambda,
                                 struct PrivrankEstimate **out);

// Number of items in an estimate.
//
// # Safety
// `estimate` must be null or a live handle.
size_t privrank_estimate_items(const struct PrivrankEstimate *estimate);

// Copies the fitted scores into `buf`, which must hold `len` = item count doubles.
//
// # Safety
// `estimate` must be a live handle; `buf` must point to `len` writable doubles.
enum PrivrankStatus privrank_estimate_theta(const struct PrivrankEstimate *estimate,
                                            double *buf,
                                            size_t len);

// Iteration count and final gradient inf-norm; either out-pointer may be null.
//
// # Safety
// `estimate` must be a live handle.
enum PrivrankStatus privrank_estimate_diagnostics(const struct PrivrankEstimate *estimate,
                                                  size_t *iterations,
                                                  double *grad_norm);

// # Safety
// `estimate` must be null or a handle from this library, not yet freed.
void privrank_estimate_free(struct PrivrankEstimate *estimate);

// Normalized Kendall distance between the rankings induced by two score vectors.
//
// # Safety
// `a` and `b` must each point to `m` doubles; `out` must be writable.
enum PrivrankStatus privrank_kendall(const double *a, const double *b, size_t m, double *out);

// Normalized Spearman footrule.
//
// # Safety
// `a` and `b` must each point to `m` doubles; `out` must be writable.
enum PrivrankStatus privrank_footrule(const double *a, const double *b, size_t m, double *out);

// Normalized top-`k` Hamming error of `estimate` against `truth`.
//
// # Safety
// `estimate` and `truth` must each point to `m` doubles; `out` must be writable.
enum PrivrankStatus privrank_topk_hamming(const double *estimate,
                                          const double *truth,
                                          size_t m,
                                          size_t k,
                                          double *out);

// `G = sum tanh(eps / 2)^2` and whether it exceeds `alpha`.
//
// # Safety
// `epsilons` must point to `users` doubles; both out-pointers must be writable.
enum PrivrankStatus privrank_budget_check(const double *epsilons,
                                          size_t users,
                                          double alpha,
                                          double *g,
                                          bool *sufficient);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVRANK_H */
