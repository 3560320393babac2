/* C ABI for the jetcert certification toolkit.
 *
 * Handles are opaque; free them with the paired *_free function. Report
 * strings are JSON owned by the library; release them with
 * jc_string_free. Error details for the most recent failing call on the
 * current thread are available through jc_last_error.
 *
 * Kept in sync with crates/ffi/src/lib.rs (cbindgen.toml is provided for
 * regeneration with cbindgen).
 */

#ifndef JETCERT_H
#define JETCERT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum JcStatus {
  /* The operation succeeded and, for checks, the property holds. */
  JC_OK = 0,
  /* The check ran and refuted the property; the report has a witness. */
  JC_REFUTED = 1,
  /* Unreadable or invalid input. */
  JC_INVALID_INPUT = 2,
  /* The sampling budget was exhausted without a verdict. */
  JC_INCONCLUSIVE = 3,
  /* A required pointer argument was null. */
  JC_NULL_POINTER = 4,
  /* An internal panic was caught at the boundary. */
  JC_PANIC = 5,
} JcStatus;

typedef struct JcOperator JcOperator;
typedef struct JcGrid JcGrid;

/* Last error message on this thread; valid until the next call. */
const char *jc_last_error(void);

/* Library version as a static string. */
const char *jc_version(void);

/* Frees a string returned by this library. Null is a no-op. */
void jc_string_free(char *s);

/* Parses an operator spec (JSON schema of the CLI) into a handle. */
JcStatus jc_operator_from_json(const char *json, JcOperator **out);

void jc_operator_free(JcOperator *op);

/* Parses a grid-function JSON file into a handle. */
JcStatus jc_grid_from_json(const char *json, JcGrid **out);

void jc_grid_free(JcGrid *grid);

/* Runs the full structural certification (pair conditions, translation
 * regularity, correspondence) and returns the bundled JSON report.
 * JC_OK if every condition passes, JC_REFUTED otherwise. */
JcStatus jc_operator_certify(const JcOperator *op,
                             uint64_t seed,
                             uint32_t pairs,
                             uint32_t jets,
                             char **report_out);

/* Phase-continuity certification of a phase grid for the arctan operator
 * in dimension dim. JC_OK certified, JC_REFUTED refuted with a block
 * witness in the report, JC_INCONCLUSIVE otherwise. */
JcStatus jc_slag_certify(const JcGrid *grid,
                         uint32_t dim,
                         uint64_t seed,
                         uint32_t draws,
                         char **report_out);

/* Comparison harness on the operator's branch map: JC_OK when the
 * boundary inequality propagates, JC_REFUTED when a precondition fails or
 * interior violations appear (see the report for which). */
JcStatus jc_compare(const JcOperator *op,
                    const JcGrid *u,
                    const JcGrid *v,
                    char **report_out);

/* Eigenvalue bound for the arctan operator over [lo, hi] in dimension
 * dim; writes +inf when the interval touches a special phase value. */
JcStatus jc_eig_bound(double lo, double hi, uint32_t dim, double *c_out);

/* Sum of arctangents of the eigenvalues of a symmetric matrix given as
 * its upper triangle, row-major, dim*(dim+1)/2 entries. */
JcStatus jc_phase_eval(uint32_t dim, const double *upper, double *g_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* JETCERT_H */
