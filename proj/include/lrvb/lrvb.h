#ifndef LRVB_H
#define LRVB_H

/* C interface to the lrvb library: mean-field variational Bayes fits with the
 * linear response covariance correction, reference samplers and the run pipeline.
 *
 * Every function returns an lrvb_status. On failure a message is available from
 * lrvb_last_error() on the calling thread until the next failing call. Handles
 * are opaque and must be released with the matching *_destroy function.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(LRVB_BUILDING_LIBRARY)
#    define LRVB_API __declspec(dllexport)
#  else
#    define LRVB_API __declspec(dllimport)
#  endif
#else
#  define LRVB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lrvb_status {
  LRVB_OK = 0,
  LRVB_ERR_DOMAIN = 1,
  LRVB_ERR_NO_CONVERGENCE = 2,
  LRVB_ERR_LAYOUT_MISMATCH = 3,
  LRVB_ERR_DIMENSION_MISMATCH = 4,
  LRVB_ERR_SINGULAR_SYSTEM = 5,
  LRVB_ERR_CONFIG = 6,
  LRVB_ERR_IO = 7,
  LRVB_ERR_MAX_SWEEPS = 8,
  LRVB_ERR_TOO_FEW_DRAWS = 9,
  LRVB_ERR_LABEL_SWITCH = 10,
  LRVB_ERR_ESS_TOO_LOW = 11,
  LRVB_ERR_NUMERICAL = 12,
  LRVB_ERR_GATE_FAILED = 13,
  LRVB_ERR_DIMENSION_TOO_LARGE = 14,
  LRVB_ERR_INVALID_ARGUMENT = 15,
  LRVB_ERR_INTERNAL = 99
} lrvb_status;

LRVB_API const char* lrvb_version(void);
LRVB_API const char* lrvb_status_name(lrvb_status status);
LRVB_API const char* lrvb_last_error(void);
/* Process exit code for a status: 0 ok, 2 config or IO, 3 convergence, 4 gate, 1 other. */
LRVB_API int lrvb_exit_code(lrvb_status status);

/* ---- Run configuration and pipeline commands ---- */

typedef struct lrvb_config lrvb_config;

LRVB_API lrvb_status lrvb_config_from_file(const char* path, lrvb_config** out);
LRVB_API lrvb_status lrvb_config_from_json(const char* json_text, lrvb_config** out);
LRVB_API lrvb_status lrvb_config_set_seed(lrvb_config* config, uint64_t seed);
LRVB_API lrvb_status lrvb_config_set_output_dir(lrvb_config* config, const char* dir);
LRVB_API lrvb_status lrvb_config_set_threads(lrvb_config* config, int threads);
/* 16 hex digits; the string is owned by the handle. */
LRVB_API lrvb_status lrvb_config_hash(const lrvb_config* config, const char** out);
LRVB_API void lrvb_config_destroy(lrvb_config* config);

/* Runs "simulate", "fit", "mcmc", "compare", "scaling" or "certify-mvn". Artifacts
 * are written even when the command reports LRVB_ERR_NO_CONVERGENCE or a gate
 * failure. The JSON summary of the last run is available from lrvb_config_summary. */
LRVB_API lrvb_status lrvb_run_command(lrvb_config* config, const char* command);
LRVB_API lrvb_status lrvb_config_summary(const lrvb_config* config, const char** out);

/* ---- Direct fits ---- */

typedef struct lrvb_fit lrvb_fit;

typedef struct lrvb_fit_options {
  double tol;     /* relative fixed-point tolerance, default 1e-9 */
  int max_sweeps; /* default 10000 */
} lrvb_fit_options;

typedef struct lrvb_np_priors {
  double sigma_beta2; /* default 10 */
  double alpha_tau;   /* default 1 */
  double beta_tau;    /* default 1 */
} lrvb_np_priors;

typedef struct lrvb_re_priors {
  double sigma_beta[4]; /* row-major 2x2, default 10 I */
  double alpha_tau, beta_tau, alpha_nu, beta_nu; /* default 2 */
} lrvb_re_priors;

typedef struct lrvb_gmm_priors {
  double mu_precision;          /* default 0.01 */
  double wishart_inverse_scale; /* default 0.01 */
  double wishart_dof;           /* default 1 */
  double dirichlet_alpha;       /* default 5 */
} lrvb_gmm_priors;

LRVB_API void lrvb_fit_options_default(lrvb_fit_options* out);
LRVB_API void lrvb_np_priors_default(lrvb_np_priors* out);
LRVB_API void lrvb_re_priors_default(lrvb_re_priors* out);
LRVB_API void lrvb_gmm_priors_default(lrvb_gmm_priors* out);

/* Null priors or options select the defaults. */
LRVB_API lrvb_status lrvb_fit_np(const double* y, const double* x, size_t n, const lrvb_np_priors* priors,
                                 const lrvb_fit_options* options, lrvb_fit** out);
/* x is row-major n x 2; group holds indices in 0..num_groups-1. */
LRVB_API lrvb_status lrvb_fit_re(const double* y, const double* x, const double* r, const int* group, size_t n,
                                 int num_groups, const lrvb_re_priors* priors, const lrvb_fit_options* options,
                                 lrvb_fit** out);
/* x is row-major n x p. */
LRVB_API lrvb_status lrvb_fit_gmm(const double* x, size_t n, int p, int k, const lrvb_gmm_priors* priors,
                                  const lrvb_fit_options* options, lrvb_fit** out);
/* Gaussian target N(mean, cov) fitted with one univariate factor per coordinate. cov is row-major d x d. */
LRVB_API lrvb_status lrvb_fit_mvn(const double* mean, const double* cov, size_t d, const lrvb_fit_options* options,
                                  lrvb_fit** out);

LRVB_API lrvb_status lrvb_fit_converged(const lrvb_fit* fit, int* out);
LRVB_API lrvb_status lrvb_fit_sweeps(const lrvb_fit* fit, int* out);
LRVB_API lrvb_status lrvb_fit_elbo(const lrvb_fit* fit, double* out);
LRVB_API lrvb_status lrvb_fit_num_params(const lrvb_fit* fit, size_t* out);
/* The name string is owned by the handle. */
LRVB_API lrvb_status lrvb_fit_param(const lrvb_fit* fit, size_t i, const char** name, double* mean);
/* Fails with LRVB_ERR_NO_CONVERGENCE when the fit did not converge. */
LRVB_API lrvb_status lrvb_fit_param_sd(const lrvb_fit* fit, size_t i, double* mfvb_sd, double* lrvb_sd);
/* LRVB covariance of the reported parameters, row-major num_params x num_params. */
LRVB_API lrvb_status lrvb_fit_covariance(const lrvb_fit* fit, double* out, size_t capacity);
LRVB_API void lrvb_fit_destroy(lrvb_fit* fit);

#ifdef __cplusplus
}
#endif

#endif /* LRVB_H */
