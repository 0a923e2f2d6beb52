#ifndef WGNLS_H
#define WGNLS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WgnlsStatus {
  WGNLS_STATUS_OK = 0,
  WGNLS_STATUS_NULL_POINTER = 1,
  WGNLS_STATUS_INVALID_ARGUMENT = 2,
  WGNLS_STATUS_NUMERICAL = 3,
  WGNLS_STATUS_IO = 4,
  WGNLS_STATUS_PANIC = 5,
} WgnlsStatus;

// Complex field on a grid.
typedef struct WgnlsField WgnlsField;

// Discretization of `R^d x T^m`.
typedef struct WgnlsGrid WgnlsGrid;

// Scalar functionals of a field at one frequency.
typedef struct WgnlsReport {
  double omega;
  double mass;
  double kinetic_x;
  double kinetic_y;
  double potential;
  double energy;
  double action;
  double virial;
  double nehari;
} WgnlsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *wgnls_last_error(void);

// Library version as a static NUL-terminated string.
const char *wgnls_version(void);

// `n_y = 0` means no torus axis (`m` must then be 0).
//
// # Safety
// `out` must be a valid pointer.
enum WgnlsStatus wgnls_grid_new(size_t d,
                                size_t m,
                                double alpha,
                                double half_length,
                                size_t n_x,
                                size_t n_y,
                                struct WgnlsGrid **out);

// # Safety
// `grid` must come from this library and not be used afterwards.
void wgnls_grid_free(struct WgnlsGrid *grid);

// Number of grid points.
//
// # Safety
// `grid` must be a valid handle or null.
size_t wgnls_grid_len(const struct WgnlsGrid *grid);

// `exp(-omega |x|^2/2) (1 + modulation cos y)`.
//
// # Safety
// `grid` and `out` must be valid pointers.
enum WgnlsStatus wgnls_field_gaussian(const struct WgnlsGrid *grid,
                                      double omega,
                                      double modulation,
                                      struct WgnlsField **out);

// Builds a field from `len` real and imaginary parts in row-major order.
//
// # Safety
// `re` and `im` must point to `len` doubles; `grid`, `out` must be valid.
enum WgnlsStatus wgnls_field_from_parts(const struct WgnlsGrid *grid,
                                        const double *re,
                                        const double *im,
                                        size_t len,
                                        struct WgnlsField **out);

// # Safety
// `field` must come from this library and not be used afterwards.
void wgnls_field_free(struct WgnlsField *field);

// # Safety
// `field` must be a valid handle or null.
size_t wgnls_field_len(const struct WgnlsField *field);

// Copies the values out; `len` must equal the field length.
//
// # Safety
// `re` and `im` must point to `len` writable doubles.
enum WgnlsStatus wgnls_field_copy_parts(const struct WgnlsField *field,
                                        double *re,
                                        double *im,
                                        size_t len);

// # Safety
// `field` and `out` must be valid pointers.
enum WgnlsStatus wgnls_evaluate(const struct WgnlsField *field,
                                double omega,
                                struct WgnlsReport *out);

// Minimizes the action on the Pohozaev manifold at frequency `omega`.
// Writes the minimizer to `out_field` and the minimum to `out_value`; the
// status is `Numerical` if the solve did not converge (the state is still
// returned).
//
// # Safety
// All pointers must be valid.
enum WgnlsStatus wgnls_solve_groundstate(const struct WgnlsGrid *grid,
                                         double omega,
                                         struct WgnlsField **out_field,
                                         double *out_value);

// Minimal energy at mass `c` on the virial manifold (mass-critical only).
//
// # Safety
// All pointers must be valid.
enum WgnlsStatus wgnls_solve_m_c(const struct WgnlsGrid *grid,
                                 double c,
                                 struct WgnlsField **out_field,
                                 double *out_value);

// # Safety
// `field` must be valid; `path` a NUL-terminated UTF-8 string.
enum WgnlsStatus wgnls_snapshot_save(const struct WgnlsField *field, const char *path);

// Loads a snapshot; the field owns a fresh grid.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` valid.
enum WgnlsStatus wgnls_snapshot_load(const char *path, struct WgnlsField **out);

// Runs a configuration file into `output_root`. `exit_code` receives the
// run's exit code (0 complete, 2 partial, 1 failed).
//
// # Safety
// `config` and `output_root` must be NUL-terminated UTF-8; `exit_code` valid.
enum WgnlsStatus wgnls_run_config(const char *config, const char *output_root, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WGNLS_H */
