#ifndef COMPACTON_H
#define COMPACTON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CptStatus {
  CPT_STATUS_OK = 0,
  CPT_STATUS_NULL_POINTER = 1,
  CPT_STATUS_INVALID_ARGUMENT = 2,
  CPT_STATUS_INFEASIBLE = 3,
  CPT_STATUS_NON_CONVERGENCE = 4,
  CPT_STATUS_FORMAT = 5,
  CPT_STATUS_IO = 6,
  CPT_STATUS_PANIC = 7,
} CptStatus;

// Opaque exponent triple `(q, p, N)`.
typedef struct CptExponents CptExponents;

// Opaque grid function with the Dirichlet row at `r = R`.
typedef struct CptField CptField;

// Opaque cylinder grid.
typedef struct CptGrid CptGrid;

// The five integrals of a field.
typedef struct CptIntegrals {
  double i_x;
  double i_z;
  double i2;
  double s_q;
  double s_p;
} CptIntegrals;

// Radial compacton found by shooting.
typedef struct CptCompacton {
  double a;
  double r_m;
  double max_psi;
  double residual_psi;
  double residual_dpsi;
  // 1 when the terminal residual met the tolerance.
  int32_t is_compacton;
} CptCompacton;

// Scalar outcome of a constrained solve.
typedef struct CptSolveSummary {
  double lambda;
  double phi;
  double pohozaev;
  double phi1;
  double phi2;
  double residual;
  double iz_fraction;
  struct CptIntegrals integrals;
  int32_t compact_support;
  int32_t periodically_trivial;
  int32_t feasible;
  int32_t converged;
  int32_t constraint_active;
} CptSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null. The pointer stays
// valid until the next `cpt_*` call on the same thread.
const char *cpt_last_error_message(void);

// Static description of a status code.
const char *cpt_status_str(enum CptStatus status);

// Creates exponents `(q, p, N)`.
//
// # Safety
// `out` must be valid for a pointer write.
enum CptStatus cpt_exponents_new(double q, double p, uint32_t n, struct CptExponents **out);

// # Safety
// `e` must be null or a handle from [`cpt_exponents_new`] or
// [`cpt_field_read_json`] that has not been freed.
void cpt_exponents_free(struct CptExponents *e);

// Creates the grid of `(−T, T) × B_R ⊂ ℝ × ℝ^N` with `nz` periodic cells and `nr`
// radial cells.
//
// # Safety
// `out` must be valid for a pointer write.
enum CptStatus cpt_grid_new(double half_period,
                            double r_omega,
                            uint32_t n,
                            uint32_t nz,
                            uint32_t nr,
                            struct CptGrid **out);

// # Safety
// `g` must be null or a live handle from [`cpt_grid_new`].
void cpt_grid_free(struct CptGrid *g);

// Number of stored values `nz·(nr + 1)` of a field on this grid.
//
// # Safety
// `g` must be a live grid handle and `len` valid for writes.
enum CptStatus cpt_grid_len(const struct CptGrid *g, uintptr_t *len);

// Builds a field from `len` row-major values (`i·(nr + 1) + j`). The values at
// `r = R` must be zero.
//
// # Safety
// `g` must be a live grid handle, `values` must point to `len` readable doubles,
// and `out` must be valid for a pointer write.
enum CptStatus cpt_field_from_values(const struct CptGrid *g,
                                     const double *values,
                                     uintptr_t len,
                                     struct CptField **out);

// # Safety
// `f` must be null or a live field handle.
void cpt_field_free(struct CptField *f);

// Copies the field values into `buf`, which must hold at least the field length.
//
// # Safety
// `f` must be a live field handle and `buf` valid for `cap` writes.
enum CptStatus cpt_field_copy_values(const struct CptField *f, double *buf, uintptr_t cap);

// Reads a field file, returning the field and its exponents as new handles.
//
// # Safety
// `path` must be a NUL-terminated string; `out_field` and `out_exps` must be
// valid for pointer writes.
enum CptStatus cpt_field_read_json(const char *path,
                                   struct CptField **out_field,
                                   struct CptExponents **out_exps);

// Writes a field file.
//
// # Safety
// Handles must be live and `path` NUL-terminated.
enum CptStatus cpt_field_write_json(const struct CptField *f,
                                    const struct CptExponents *e,
                                    const char *path);

// # Safety
// Handles must be live and `out` valid for writes.
enum CptStatus cpt_integrals(const struct CptField *f,
                             const struct CptExponents *e,
                             struct CptIntegrals *out);

// Energy `Φ` of a bundle at `lambda`.
//
// # Safety
// Pointers must be valid.
enum CptStatus cpt_energy(const struct CptIntegrals *b,
                          double lambda,
                          const struct CptExponents *e,
                          double *out);

// Pohozaev functional `P` of a bundle at `lambda`.
//
// # Safety
// Pointers must be valid.
enum CptStatus cpt_pohozaev(const struct CptIntegrals *b,
                            double lambda,
                            const struct CptExponents *e,
                            double *out);

// First and second derivatives of `t ↦ Φ(tu)` at `t = 1`.
//
// # Safety
// Pointers must be valid.
enum CptStatus cpt_fiber_derivatives(const struct CptIntegrals *b,
                                     double lambda,
                                     const struct CptExponents *e,
                                     double *phi1,
                                     double *phi2);

// Boundary side of the Pohozaev identity.
//
// # Safety
// `f` must be live and `out` valid for writes.
enum CptStatus cpt_boundary_flux(const struct CptField *f, double *out);

// Shoots for the radial compacton of dimension `dim` with default tolerances.
//
// # Safety
// `out` must be valid for writes.
enum CptStatus cpt_find_compacton(uint32_t dim, double q, double p, struct CptCompacton *out);

// Constrained least-energy solve at `lambda` with default options and seeds.
// `out_field` may be null when the solution field is not needed.
//
// # Safety
// Handles must be live; `out` must be valid for writes; `out_field` must be null
// or valid for a pointer write.
enum CptStatus cpt_solve(const struct CptGrid *g,
                         const struct CptExponents *e,
                         double lambda,
                         struct CptSolveSummary *out,
                         struct CptField **out_field);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMPACTON_H */
