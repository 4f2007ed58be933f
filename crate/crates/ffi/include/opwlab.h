#ifndef OPWLAB_H
#define OPWLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum OpwStatus {
  OPW_STATUS_OK = 0,
  OPW_STATUS_NULL_POINTER = 1,
  OPW_STATUS_INVALID_ARGUMENT = 2,
  OPW_STATUS_GRID_MISMATCH = 3,
  OPW_STATUS_NUMERICAL_FAILURE = 4,
  OPW_STATUS_SIZE_CAP = 5,
  OPW_STATUS_NOT_HILBERT_SCHMIDT = 6,
  OPW_STATUS_RESOLUTION = 7,
  OPW_STATUS_PARSE = 8,
  OPW_STATUS_IO = 9,
  OPW_STATUS_PANIC = 10,
} OpwStatus;

typedef enum OpwSignalKind {
  /**
   * `chi_[-p, p]`.
   */
  OPW_SIGNAL_KIND_INDICATOR = 0,
  /**
   * `sin(2 pi p x)/(pi x)`.
   */
  OPW_SIGNAL_KIND_SINC = 1,
  /**
   * `exp(-pi (x/p)^2)`.
   */
  OPW_SIGNAL_KIND_GAUSSIAN = 2,
  /**
   * `sin(2 pi p x)`.
   */
  OPW_SIGNAL_KIND_SINUSOID = 3,
  /**
   * Inverse grid transform of `chi_[-p, p]`.
   */
  OPW_SIGNAL_KIND_DISCRETE_SINC = 4,
} OpwSignalKind;

/**
 * Opaque operator in one of its structured or dense representations.
 */
typedef struct OpwOperator OpwOperator;

/**
 * Opaque sampled signal on a uniform grid.
 */
typedef struct OpwSignal OpwSignal;

/**
 * Spreading support of an operator.
 */
typedef struct OpwBox {
  double t_min;
  double t_max;
  double v_min;
  double v_max;
  /**
   * Nonzero when the operator has no spreading above the threshold.
   */
  int32_t empty;
} OpwBox;

/**
 * Parameters shared by the two constructions. `lambda <= 0` selects the
 * default schedule; `fixed_b` / `fixed_delta <= 0` let the pipeline choose.
 */
typedef struct OpwTheoremParams {
  /**
   * Frequency half-width for the box input, time half-width for the sinc
   * input.
   */
  double alpha;
  /**
   * `gamma` (box input) or `beta` (sinc input).
   */
  double width;
  /**
   * Absolute error target.
   */
  double epsilon;
  /**
   * Share of `epsilon^2` given to the tail, in `(0, 1)`.
   */
  double c;
  double extent_factor;
  size_t oversample;
  double lambda;
  double fixed_b;
  double fixed_delta;
} OpwTheoremParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful call. Valid until the next call on the same thread.
 */
const char *opw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *opw_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void opw_string_free(char *s);

/**
 * Creates a signal with samples `re[j] + i im[j]` at `x0 + j dx`. `im` may be
 * NULL for a real signal.
 *
 * # Safety
 * `re` (and `im` unless NULL) must point to `n` readable doubles; `out` must
 * be writable.
 */
enum OpwStatus opw_signal_new(double x0,
                              double dx,
                              size_t n,
                              const double *re,
                              const double *im,
                              struct OpwSignal **out_signal);

/**
 * Samples a standard signal with parameter `p` on `x0 + j dx`.
 *
 * # Safety
 * `out_signal` must be writable.
 */
enum OpwStatus opw_signal_sample(enum OpwSignalKind kind,
                                 double p,
                                 double x0,
                                 double dx,
                                 size_t n,
                                 struct OpwSignal **out_signal);

/**
 * Reads the grid of a signal.
 *
 * # Safety
 * `s` must be a live signal; the out pointers must be writable.
 */
enum OpwStatus opw_signal_grid(const struct OpwSignal *s, double *x0, double *dx, size_t *n);

/**
 * Copies up to `len` samples into `re` / `im` (either may be NULL).
 *
 * # Safety
 * `s` must be a live signal; non-NULL buffers must hold `len` doubles.
 */
enum OpwStatus opw_signal_samples(const struct OpwSignal *s, double *re, double *im, size_t len);

/**
 * `L^2` norm by grid quadrature.
 *
 * # Safety
 * `s` must be a live signal; `norm` must be writable.
 */
enum OpwStatus opw_signal_l2_norm(const struct OpwSignal *s, double *norm);

/**
 * Continuous-normalised transform onto the dual grid.
 *
 * # Safety
 * `s` must be a live signal; `out_signal` must be writable.
 */
enum OpwStatus opw_signal_dft(const struct OpwSignal *s, struct OpwSignal **out_signal);

/**
 * Inverse of [`opw_signal_dft`].
 *
 * # Safety
 * `s` must be a live signal; `out_signal` must be writable.
 */
enum OpwStatus opw_signal_idft(const struct OpwSignal *s, struct OpwSignal **out_signal);

/**
 * # Safety
 * `s` must come from this library and not have been freed. NULL is ignored.
 */
void opw_signal_free(struct OpwSignal *s);

/**
 * Loads an operator written by `opwlab run` (`operator.json`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_op` must be writable.
 */
enum OpwStatus opw_operator_read(const char *path, struct OpwOperator **out_op);

/**
 * Writes `<dir>/<stem>.json` plus one text file per factor.
 *
 * # Safety
 * `op` must be live; `dir` and `stem` NUL-terminated strings.
 */
enum OpwStatus opw_operator_write(const struct OpwOperator *op, const char *dir, const char *stem);

/**
 * Representation name: `multiplication`, `convolution`, `separable`,
 * `separable_freq` or `dense`. Static string; NULL for a NULL handle.
 *
 * # Safety
 * `op` must be live or NULL.
 */
const char *opw_operator_kind(const struct OpwOperator *op);

/**
 * `H f` on the grid of `f`. Dense operators honour `OPWLAB_DENSE_CAP`.
 *
 * # Safety
 * `op` and `f` must be live; `out_signal` must be writable.
 */
enum OpwStatus opw_operator_apply(const struct OpwOperator *op,
                                  const struct OpwSignal *f,
                                  struct OpwSignal **out_signal);

/**
 * Hilbert-Schmidt norm `||eta||_2`. Fails with `NotHilbertSchmidt` for pure
 * multiplication and convolution operators.
 *
 * # Safety
 * `op` must be live; `norm` must be writable.
 */
enum OpwStatus opw_operator_hs_norm(const struct OpwOperator *op, double *norm);

/**
 * Sup norm of the symbol.
 *
 * # Safety
 * `op` must be live; `norm` must be writable.
 */
enum OpwStatus opw_operator_symbol_sup(const struct OpwOperator *op, double *norm);

/**
 * Smallest box holding every spreading value above `threshold` times the
 * peak.
 *
 * # Safety
 * `op` must be live; `out_box` must be writable.
 */
enum OpwStatus opw_operator_support_box(const struct OpwOperator *op,
                                        double threshold,
                                        struct OpwBox *out_box);

/**
 * # Safety
 * `op` must come from this library and not have been freed. NULL is ignored.
 */
void opw_operator_free(struct OpwOperator *op);

/**
 * Defaults: `c = 0.5`, extent 3, oversample 8, default schedules.
 */
struct OpwTheoremParams opw_theorem_params_default(double alpha, double width, double epsilon);

/**
 * Box-input construction: an operator with `H chi_[-B, B] ~ y`. A run that
 * misses its budget still returns `Ok`; check `converged` in the report.
 *
 * # Safety
 * `y` and `params` must be live; the out pointers must be writable.
 */
enum OpwStatus opw_build_box_input(const struct OpwSignal *y,
                                   const struct OpwTheoremParams *params,
                                   struct OpwOperator **out_op,
                                   char **out_report);

/**
 * Sinc-input construction: an operator with `H phi_B ~ y`.
 *
 * # Safety
 * As for [`opw_build_box_input`].
 */
enum OpwStatus opw_build_sinc_input(const struct OpwSignal *y,
                                    const struct OpwTheoremParams *params,
                                    struct OpwOperator **out_op,
                                    char **out_report);

/**
 * Seeded obstruction check on the grid `x0 + j dx`; writes the report as
 * JSON.
 *
 * # Safety
 * `out_report` must be writable.
 */
enum OpwStatus opw_obstruction(double alpha,
                               double shift,
                               double x0,
                               double dx,
                               size_t n,
                               uint64_t seed,
                               char **out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPWLAB_H */
