#ifndef CONSLAB_H
#define CONSLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Zero is success.
typedef enum ConslabStatus {
  CONSLAB_STATUS_OK = 0,
  CONSLAB_STATUS_NULL_POINTER = 1,
  CONSLAB_STATUS_INVALID_PARAMETER = 2,
  CONSLAB_STATUS_NOT_NORMALIZED = 3,
  CONSLAB_STATUS_UNDERDETERMINED = 4,
  CONSLAB_STATUS_DIMENSION_OVERFLOW = 5,
  CONSLAB_STATUS_EMPTY_BRANCH = 6,
  // A conservation audit or other internal invariant failed.
  CONSLAB_STATUS_INVARIANT_VIOLATION = 7,
  CONSLAB_STATUS_NUMERICAL = 8,
  CONSLAB_STATUS_PANIC = 9,
} ConslabStatus;

typedef enum ConslabViolationKind {
  CONSLAB_VIOLATION_KIND_NO_VIOLATION = 0,
  CONSLAB_VIOLATION_KIND_TYPE_I = 1,
  CONSLAB_VIOLATION_KIND_TYPE_II = 2,
} ConslabViolationKind;

// Spin-1/2 particle, spin-L apparatus and record qubit.
typedef struct ConslabSystem ConslabSystem;

// Real, nonnegative amplitudes of |+z>|ready> -> C|u> + D|d'> and
// |-z>|ready> -> E|d> + F|u'>.
typedef struct ConslabErrorAmplitudes {
  double c;
  double d;
  double e;
  double f;
} ConslabErrorAmplitudes;

typedef struct ConslabComplex {
  double re;
  double im;
} ConslabComplex;

typedef struct ConslabVec3 {
  double x;
  double y;
  double z;
} ConslabVec3;

typedef struct ConslabComplexVec3 {
  struct ConslabComplex x;
  struct ConslabComplex y;
  struct ConslabComplex z;
} ConslabComplexVec3;

// SI values: I k T, Delta L = sqrt(I k T), Delta theta = hbar / Delta L.
typedef struct ConslabThermal {
  double ikt;
  double delta_l;
  double delta_theta;
} ConslabThermal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *conslab_last_error(void);

// Builds a system with apparatus spin `twice_l / 2`, tilted by `tilt` radians.
//
// # Safety
// `out` must be valid for writing one pointer.
enum ConslabStatus conslab_system_new(uint32_t twice_l, double tilt, struct ConslabSystem **out);

// Releases a handle from [`conslab_system_new`]. NULL is a no-op.
//
// # Safety
// `sys` must be NULL or a handle not yet freed.
void conslab_system_free(struct ConslabSystem *sys);

// # Safety
// `sys` must be a live handle; `out` valid for one write.
enum ConslabStatus conslab_error_amplitudes(const struct ConslabSystem *sys,
                                            struct ConslabErrorAmplitudes *out);

// <J> before and after the measurement unitary for the particle a|up> + b|dn>.
//
// # Safety
// `sys` must be a live handle; `before` and `after` valid for one write each.
enum ConslabStatus conslab_premeasure_expectations(const struct ConslabSystem *sys,
                                                   struct ConslabComplex a,
                                                   struct ConslabComplex b,
                                                   struct ConslabVec3 *before,
                                                   struct ConslabVec3 *after);

// Left-hand side minus (1/2, -i/2, 0) of the three coefficient-matching equations.
//
// # Safety
// `sys` must be a live handle; `residuals` valid for one write.
enum ConslabStatus conslab_matching_residuals(const struct ConslabSystem *sys,
                                              struct ConslabComplexVec3 *residuals);

// Classifies the bookkeeping of total J for the apparatus model.
//
// # Safety
// `sys` must be a live handle; `out` valid for one write.
enum ConslabStatus conslab_apparatus_classify(const struct ConslabSystem *sys,
                                              struct ConslabComplex a,
                                              struct ConslabComplex b,
                                              enum ConslabViolationKind *out);

// |record-stripped cross term| of the particle's S_x after `n_env` environment
// qubits with per-qubit overlap `overlap` have copied the record.
//
// # Safety
// `sys` must be a live handle; `out` valid for one write.
enum ConslabStatus conslab_cross_term_after_amplification(const struct ConslabSystem *sys,
                                                          struct ConslabComplex a,
                                                          struct ConslabComplex b,
                                                          uint32_t n_env,
                                                          double overlap,
                                                          double *out);

// Cross brackets <u|J|d> forced on an ideal measurement of a|up> + b|dn>.
//
// # Safety
// `out` must be valid for one write.
enum ConslabStatus conslab_ideal_cross_terms(struct ConslabComplex a,
                                             struct ConslabComplex b,
                                             struct ConslabComplexVec3 *out);

// Thermal orientation estimate for moment of inertia `i` (kg m^2) at `t` kelvin.
//
// # Safety
// `out` must be valid for one write.
enum ConslabStatus conslab_thermal(double i, double t, struct ConslabThermal *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONSLAB_H */
