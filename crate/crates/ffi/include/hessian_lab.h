#ifndef HESSIAN_LAB_H
#define HESSIAN_LAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Differentiation backend for solves.
 */
typedef enum HlBackend {
  HL_BACKEND_FINITE_DIFFERENCE = 0,
  HL_BACKEND_SPECTRAL = 1,
} HlBackend;

/**
 * Status codes.
 */
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_OUTSIDE_CONE = 3,
  HL_STATUS_NON_POSITIVE_MATRIX = 4,
  HL_STATUS_NO_CONVERGENCE = 5,
  HL_STATUS_NUMERICAL = 6,
  HL_STATUS_IO = 7,
  HL_STATUS_PANIC = 8,
} HlStatus;

/**
 * Metric, form and cone margin.
 */
typedef struct HlBackground HlBackground;

/**
 * Grid function on the torus.
 */
typedef struct HlField HlField;

/**
 * Operator with its cone.
 */
typedef struct HlOperator HlOperator;

/**
 * Result of a solve, including the solution field.
 */
typedef struct HlSolveReport HlSolveReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` and returns
 * the full message length, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t hl_last_error(char *buf, size_t cap);

/**
 * `sigma_k^{1/k}` in dimension `n`.
 *
 * # Safety
 * `op` must be a valid pointer to write the handle to.
 */
enum HlStatus hl_operator_sigma_k(size_t n, size_t k, struct HlOperator **op);

/**
 * Operator from a JSON document such as `{"kind": "pfold_sum", "p": 2}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `op` a valid pointer.
 */
enum HlStatus hl_operator_from_json(size_t n, const char *json, struct HlOperator **op);

/**
 * `f(lambda)` for `n` eigenvalues.
 *
 * # Safety
 * `lambda` must hold `len` values and `value` must be valid.
 */
enum HlStatus hl_operator_eval(const struct HlOperator *op,
                               const double *lambda,
                               size_t len,
                               double *value);

/**
 * # Safety
 * `op` must be null or a handle from this library, freed once.
 */
void hl_operator_free(struct HlOperator *op);

/**
 * Ascending eigenvalues of `A` relative to `g > 0`, written to `out`
 * (`n` values).
 *
 * # Safety
 * Matrices hold `n * n` row-major values; imaginary parts may be null.
 */
enum HlStatus hl_generalized_eigenvalues(size_t n,
                                         const double *a_re,
                                         const double *a_im,
                                         const double *g_re,
                                         const double *g_im,
                                         double *out_values);

/**
 * Constant background on the grid `(n, m)` with metric `g` and form
 * `chi`, checked against the cone of `op`.
 *
 * # Safety
 * Matrices hold `n * n` row-major values; imaginary parts may be null.
 */
enum HlStatus hl_background_constant(const struct HlOperator *op,
                                     size_t m,
                                     const double *g_re,
                                     const double *g_im,
                                     const double *chi_re,
                                     const double *chi_im,
                                     struct HlBackground **bg);

/**
 * Cone margin `c_star` of the background form.
 *
 * # Safety
 * `bg` must be a valid handle.
 */
double hl_background_c_star(const struct HlBackground *bg);

/**
 * # Safety
 * `bg` must be null or a handle from this library, freed once.
 */
void hl_background_free(struct HlBackground *bg);

/**
 * Field from `m^{2n}` values in row-major order, last axis fastest.
 *
 * # Safety
 * `values` must hold `len` values.
 */
enum HlStatus hl_field_new(size_t n,
                           size_t m,
                           const double *values,
                           size_t len,
                           struct HlField **field);

/**
 * Field sampled from an expression in `x0..x{2n-1}`.
 *
 * # Safety
 * `expr` must be a NUL-terminated string.
 */
enum HlStatus hl_field_from_expr(size_t n, size_t m, const char *expr, struct HlField **field);

/**
 * Number of grid points.
 *
 * # Safety
 * `field` must be a valid handle.
 */
size_t hl_field_len(const struct HlField *field);

/**
 * Copies the values into `dst`, which must hold `hl_field_len` values.
 *
 * # Safety
 * `dst` must be valid for `cap` values.
 */
enum HlStatus hl_field_values(const struct HlField *field, double *dst, size_t cap);

/**
 * # Safety
 * `field` must be null or a handle from this library, freed once.
 */
void hl_field_free(struct HlField *field);

/**
 * Sup-convolution (`inf_conv = 0`) or inf-convolution (`inf_conv != 0`)
 * with parameter `eps`.
 *
 * # Safety
 * `field` must be a valid handle and `result` a valid pointer.
 */
enum HlStatus hl_convolution(const struct HlField *field,
                             double eps,
                             int32_t inf_conv,
                             struct HlField **result);

/**
 * Solves `F(chi + dd^c phi) = e^{G + c}` with `sup phi = 0`.
 *
 * # Safety
 * Handles must be valid and `report` a valid pointer.
 */
enum HlStatus hl_solve_fixed(const struct HlOperator *op,
                             const struct HlBackground *bg,
                             const struct HlField *g,
                             double newton_tol,
                             enum HlBackend backend,
                             struct HlSolveReport **report);

/**
 * The constant `c` of a solve.
 *
 * # Safety
 * `report` must be a valid handle.
 */
double hl_report_c(const struct HlSolveReport *report);

/**
 * Newton iterations over all continuation steps.
 *
 * # Safety
 * `report` must be a valid handle.
 */
size_t hl_report_newton_iterations(const struct HlSolveReport *report);

/**
 * Final sup-norm log-residual.
 *
 * # Safety
 * `report` must be a valid handle.
 */
double hl_report_residual(const struct HlSolveReport *report);

/**
 * Copy of the solution field.
 *
 * # Safety
 * `report` must be a valid handle and `field` a valid pointer.
 */
enum HlStatus hl_report_phi(const struct HlSolveReport *report, struct HlField **field);

/**
 * # Safety
 * `report` must be null or a handle from this library, freed once.
 */
void hl_report_free(struct HlSolveReport *report);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HESSIAN_LAB_H */
