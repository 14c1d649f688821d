#ifndef RDI_MSM_H
#define RDI_MSM_H

/* Generated by cbindgen from rdi-msm-ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of marginal structural model coefficients.
 */
#define RDI_MSM_TERMS 5

typedef enum RdiSchema {
  RDI_SCHEMA_LONG = 0,
  RDI_SCHEMA_WIDE = 1,
} RdiSchema;

typedef enum RdiStatus {
  RDI_STATUS_OK = 0,
  RDI_STATUS_NULL_POINTER = 1,
  RDI_STATUS_INVALID_ARGUMENT = 2,
  RDI_STATUS_IO = 3,
  RDI_STATUS_VALIDATION = 4,
  RDI_STATUS_NUMERIC = 5,
  RDI_STATUS_PANIC = 6,
} RdiStatus;

typedef enum RdiTies {
  RDI_TIES_BRESLOW = 0,
  RDI_TIES_EFRON = 1,
} RdiTies;

typedef enum RdiToxicitySet {
  RDI_TOXICITY_SET_GENERAL = 0,
  RDI_TOXICITY_SET_RULE = 1,
} RdiToxicitySet;

/**
 * Eligible analysis cohort.
 */
typedef struct RdiCohort RdiCohort;

/**
 * Fitted marginal structural Cox model.
 */
typedef struct RdiCoxFit RdiCoxFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rdi_last_error(void);

/**
 * Exposure strategy for a received dose intensity: 0 standard, 1 reduced,
 * 2 highly reduced.
 *
 * # Safety
 * `out` must point to writable memory for one `uint8_t`.
 */
enum RdiStatus rdi_classify_exposure(double rdi, uint8_t *out);

/**
 * MOTox score of eight CTCAE grades (0 to 4) ordered leucopenia,
 * thrombocytopenia, oral mucositis, ototoxicity, cardiotoxicity,
 * neurotoxicity, nausea/vomiting, infection.
 *
 * # Safety
 * `grades` must point to 8 readable bytes and `out` to one writable double.
 */
enum RdiStatus rdi_motox_score(const uint8_t *grades, enum RdiToxicitySet set, double *out);

/**
 * Reads patient records, applies eligibility and derives covariates.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum RdiStatus rdi_cohort_load(const char *path, enum RdiSchema schema, struct RdiCohort **out);

/**
 * Simulates an eligible cohort of `n` patients with the default simulator.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum RdiStatus rdi_cohort_simulate(size_t n, uint64_t seed, struct RdiCohort **out);

/**
 * Number of patients in the cohort; 0 for NULL.
 *
 * # Safety
 * `cohort` must be NULL or a live handle.
 */
size_t rdi_cohort_len(const struct RdiCohort *cohort);

/**
 * # Safety
 * `cohort` must be NULL or a handle not yet freed.
 */
void rdi_cohort_free(struct RdiCohort *cohort);

/**
 * Stabilized weights under specification `spec` ("iptw1" to "iptw5"),
 * written to `out[0..len]`; `len` must equal the cohort size.
 *
 * # Safety
 * `cohort` must be live, `spec` NUL-terminated and `out` writable for `len`
 * doubles.
 */
enum RdiStatus rdi_stabilized_weights(const struct RdiCohort *cohort,
                                      const char *spec,
                                      double *out,
                                      size_t len);

/**
 * Fits the marginal structural Cox model. `weights` may be NULL for unit
 * weights; otherwise it holds `len` (= cohort size) positive values.
 *
 * # Safety
 * `cohort` must be live, `weights` NULL or readable for `len` doubles and
 * `out` writable.
 */
enum RdiStatus rdi_cox_fit(const struct RdiCohort *cohort,
                           const double *weights,
                           size_t len,
                           enum RdiTies ties,
                           struct RdiCoxFit **out);

/**
 * Coefficients for a1, a2, a1:V, a2:V and V.
 *
 * # Safety
 * `fit` must be live and `out` writable for `len` doubles.
 */
enum RdiStatus rdi_cox_coefficients(const struct RdiCoxFit *fit, double *out, size_t len);

/**
 * Model-based standard errors, in coefficient order.
 *
 * # Safety
 * `fit` must be live and `out` writable for `len` doubles.
 */
enum RdiStatus rdi_cox_model_se(const struct RdiCoxFit *fit, double *out, size_t len);

/**
 * Robust sandwich standard errors, in coefficient order.
 *
 * # Safety
 * `fit` must be live and `out` writable for `len` doubles.
 */
enum RdiStatus rdi_cox_robust_se(const struct RdiCoxFit *fit, double *out, size_t len);

/**
 * RMST difference at horizon `t` between strategy `a` (1 or 2) and the
 * standard strategy in stratum `v` (0 or 1).
 *
 * # Safety
 * `fit` must be live and `out` writable.
 */
enum RdiStatus rdi_cate(const struct RdiCoxFit *fit, uint8_t a, uint8_t v, double t, double *out);

/**
 * Restricted mean of a right-continuous step survival curve up to `t`.
 *
 * # Safety
 * `times` and `values` must be readable for `len` doubles, `out` writable.
 */
enum RdiStatus rdi_rmst(const double *times,
                        const double *values,
                        size_t len,
                        double t,
                        double *out);

/**
 * # Safety
 * `fit` must be NULL or a handle not yet freed.
 */
void rdi_cox_fit_free(struct RdiCoxFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDI_MSM_H */
