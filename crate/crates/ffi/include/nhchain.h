#ifndef NHCHAIN_H
#define NHCHAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum NhStatus {
  NH_STATUS_OK = 0,
  NH_STATUS_NULL_POINTER = 1,
  NH_STATUS_INVALID_ARGUMENT = 2,
  NH_STATUS_NUMERICAL_FAILURE = 3,
  NH_STATUS_IO = 4,
  NH_STATUS_PANIC = 5,
} NhStatus;

/**
 * Opaque tight-binding Hamiltonian.
 */
typedef struct NhHamiltonian NhHamiltonian;

/**
 * Opaque sampled trajectory.
 */
typedef struct NhTrajectory NhTrajectory;

typedef struct NhComplex {
  double re;
  double im;
} NhComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length plus one, so a caller
 * can size the buffer; `buf` may be null when `len` is 0.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
size_t nh_last_error_message(char *buf, size_t len);

/**
 * Builds a uniform chain. Defects are given as parallel arrays of length
 * `n_defects` (any may be null when `n_defects` is 0).
 *
 * # Safety
 * Array pointers must be valid for `n_defects` elements; `out` must be writable.
 */
enum NhStatus nh_chain_new(double kappa,
                           double beta,
                           double gamma,
                           double phi,
                           size_t n_sites,
                           int64_t index_origin,
                           bool periodic,
                           const int64_t *defect_sites,
                           const double *defect_v_real,
                           const double *defect_xi_imag,
                           size_t n_defects,
                           struct NhHamiltonian **out);

/**
 * Builds the capture structure: lossy chains with opposite phases around a
 * Hermitian window `[-half_width, half_width]` bounded by `v_c + i xi`.
 *
 * # Safety
 * `out` must be writable.
 */
enum NhStatus nh_sandwich_new(double kappa,
                              double beta,
                              double gamma,
                              size_t n_sites,
                              int64_t index_origin,
                              int64_t half_width,
                              double q0,
                              double v_c,
                              double xi,
                              struct NhHamiltonian **out);

/**
 * # Safety
 * `h` must come from `nh_chain_new`/`nh_sandwich_new` and not be freed twice.
 */
void nh_hamiltonian_free(struct NhHamiltonian *h);

/**
 * # Safety
 * `h` must be a live handle; `out_dim` must be writable.
 */
enum NhStatus nh_hamiltonian_dim(const struct NhHamiltonian *h, size_t *out_dim);

/**
 * # Safety
 * `h` must be a live handle; `out_labels` must hold `len` elements.
 */
enum NhStatus nh_hamiltonian_site_labels(const struct NhHamiltonian *h,
                                         int64_t *out_labels,
                                         size_t len);

/**
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum NhStatus nh_hamiltonian_is_hermitian(const struct NhHamiltonian *h, bool *out);

/**
 * Writes the dense matrix row-major into `buf` (`dim * dim` entries).
 *
 * # Safety
 * `h` must be a live handle; `buf` must hold `len` elements.
 */
enum NhStatus nh_hamiltonian_to_dense(const struct NhHamiltonian *h,
                                      struct NhComplex *buf,
                                      size_t len);

/**
 * Closed-form band energy at wavenumber `q`.
 *
 * # Safety
 * `out` must be writable.
 */
enum NhStatus nh_dispersion(double kappa,
                            double beta,
                            double gamma,
                            double phi,
                            double q,
                            struct NhComplex *out);

double nh_group_velocity(double kappa, double q);

/**
 * RK4 evolution of `c0` (length `dim`) under `h`.
 *
 * # Safety
 * `h` must be a live handle; `c0` must hold `len` elements; `out` must be writable.
 */
enum NhStatus nh_evolve_rk4(const struct NhHamiltonian *h,
                            const struct NhComplex *c0,
                            size_t len,
                            double t_final,
                            double dt,
                            double sample_dt,
                            struct NhTrajectory **out);

/**
 * Exact (matrix-exponential) evolution of `c0` under `h`.
 *
 * # Safety
 * `h` must be a live handle; `c0` must hold `len` elements; `out` must be writable.
 */
enum NhStatus nh_evolve_exact(const struct NhHamiltonian *h,
                              const struct NhComplex *c0,
                              size_t len,
                              double t_final,
                              double sample_dt,
                              struct NhTrajectory **out);

/**
 * # Safety
 * `t` must come from `nh_evolve_*` and not be freed twice.
 */
void nh_trajectory_free(struct NhTrajectory *t);

/**
 * # Safety
 * `t` must be a live handle; the out pointers must be writable.
 */
enum NhStatus nh_trajectory_shape(const struct NhTrajectory *t,
                                  size_t *out_samples,
                                  size_t *out_dim);

/**
 * Sample times (`n_samples` entries).
 *
 * # Safety
 * `t` must be a live handle; `buf` must hold `len` elements.
 */
enum NhStatus nh_trajectory_times(const struct NhTrajectory *t, double *buf, size_t len);

/**
 * Total norm `S(t)` per sample (`n_samples` entries).
 *
 * # Safety
 * `t` must be a live handle; `buf` must hold `len` elements.
 */
enum NhStatus nh_trajectory_norms(const struct NhTrajectory *t, double *buf, size_t len);

/**
 * Amplitudes of sample `k` (`dim` entries).
 *
 * # Safety
 * `t` must be a live handle; `buf` must hold `len` elements.
 */
enum NhStatus nh_trajectory_state(const struct NhTrajectory *t,
                                  size_t k,
                                  struct NhComplex *buf,
                                  size_t len);

/**
 * `sum n |c_n|^2 / sum |c_n|^2` over the given labels.
 *
 * # Safety
 * `amplitudes` and `labels` must hold `len` elements; `out` must be writable.
 */
enum NhStatus nh_centroid(const struct NhComplex *amplitudes,
                          const int64_t *labels,
                          size_t len,
                          double *out);

/**
 * `|c_n| / sqrt(S)` for each site.
 *
 * # Safety
 * `amplitudes` and `out` must hold `len` elements.
 */
enum NhStatus nh_normalized_profile(const struct NhComplex *amplitudes, size_t len, double *out);

/**
 * Runs a named preset (or preset group such as `fig7`) and writes its
 * artifacts into `out_dir`, exactly as the command-line tool does.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum NhStatus nh_run_preset_to_dir(const char *name, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NHCHAIN_H */
