#ifndef MEMORYFLOW_H
#define MEMORYFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MfFramework {
  MF_FRAMEWORK_HISTORY = 0,
  MF_FRAMEWORK_STATE = 1,
} MfFramework;

typedef enum MfNonlinearity {
  MF_NONLINEARITY_ZERO = 0,
  MF_NONLINEARITY_CUBIC = 1,
  MF_NONLINEARITY_CUBIC_MINUS_LINEAR = 2,
} MfNonlinearity;

typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_ARGUMENT = 2,
  MF_STATUS_INVALID_KERNEL = 3,
  MF_STATUS_INVALID_MODEL = 4,
  MF_STATUS_BLOW_UP = 5,
  MF_STATUS_IO = 6,
  MF_STATUS_CONFIG = 7,
  MF_STATUS_PANIC = 8,
} MfStatus;

typedef struct MfKernel MfKernel;

typedef struct MfModel MfModel;

typedef struct MfTrajectory MfTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *mf_last_error(void);

enum MfStatus mf_kernel_exponential(double delta, struct MfKernel **kernel);

enum MfStatus mf_kernel_flatzone(struct MfKernel **kernel);

/**
 * Load a kernel definition file (TOML).
 */
enum MfStatus mf_kernel_load(const char *path, struct MfKernel **kernel);

void mf_kernel_free(struct MfKernel *kernel);

/**
 * `mu(s)` and `k(s)`; either output may be null.
 */
enum MfStatus mf_kernel_eval(const struct MfKernel *kernel, double s, double *mu, double *k);

/**
 * Grid scan of `mu(t + s) <= theta e^{-delta t} mu(s)` with the given spacing.
 */
enum MfStatus mf_kernel_check_nec(const struct MfKernel *kernel,
                                  double theta,
                                  double delta,
                                  double spacing,
                                  bool *holds,
                                  double *worst_ratio);

enum MfStatus mf_kernel_flatness_rate(const struct MfKernel *kernel, double *rate);

/**
 * Model on `(0, pi)` with `modes` sine modes. `forcing` holds `modes`
 * coefficients or is null for `g = 0`; `beta` is read only for
 * `MF_NONLINEARITY_CUBIC_MINUS_LINEAR`.
 */
enum MfStatus mf_model_interval(size_t modes,
                                enum MfNonlinearity nonlinearity,
                                double beta,
                                const double *forcing,
                                struct MfModel **model);

void mf_model_free(struct MfModel *model);

/**
 * Integrate from `(u0, v0)` with zero memory up to `t_end`.
 */
enum MfStatus mf_simulate(const struct MfModel *model,
                          const struct MfKernel *kernel,
                          const double *u0,
                          const double *v0,
                          size_t modes,
                          double dt,
                          double t_end,
                          enum MfFramework framework,
                          struct MfTrajectory **trajectory);

void mf_trajectory_free(struct MfTrajectory *trajectory);

/**
 * Number of stored snapshots and modes.
 */
enum MfStatus mf_trajectory_shape(const struct MfTrajectory *trajectory,
                                  size_t *snapshots,
                                  size_t *modes);

/**
 * Copy snapshot `index`: time into `t`, coefficients into `u` and `v`
 * (each `modes` long; `u` or `v` may be null to skip).
 */
enum MfStatus mf_trajectory_snapshot(const struct MfTrajectory *trajectory,
                                     size_t index,
                                     double *t,
                                     double *u,
                                     double *v);

/**
 * `sup_a inf_b |a - b|` for row-major clouds of `na` and `nb` points in dimension `dim`.
 */
enum MfStatus mf_hausdorff_semidist(const double *a,
                                    size_t na,
                                    const double *b,
                                    size_t nb,
                                    size_t dim,
                                    double *dist);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMORYFLOW_H */
