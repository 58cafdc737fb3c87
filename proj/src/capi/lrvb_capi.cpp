#include "lrvb/lrvb.h"

#include "lrvb/engine.hpp"
#include "lrvb/error.hpp"
#include "lrvb/models/gmm.hpp"
#include "lrvb/models/mvn.hpp"
#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/models/random_effects.hpp"
#include "lrvb/pipeline/commands.hpp"
#include "lrvb/pipeline/config.hpp"

#include <json.hpp>

#include <cstring>
#include <new>
#include <string>
#include <vector>

using namespace lrvb;
using namespace lrvb::models;

struct lrvb_config {
  pipeline::RunConfig config;
  std::string hash;
  std::string summary = "{}";
};

struct lrvb_fit {
  bool converged = false;
  int sweeps = 0;
  double elbo = 0.0;
  std::vector<std::string> names;
  Eigen::VectorXd means;
  Eigen::VectorXd mfvb_sd;
  Eigen::VectorXd lrvb_sd;
  Eigen::MatrixXd cov;
};

namespace {

thread_local std::string last_error;

lrvb_status fail(lrvb_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class F>
lrvb_status guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return fail(static_cast<lrvb_status>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(LRVB_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(LRVB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(LRVB_ERR_INTERNAL, e.what());
  }
}

#define LRVB_REQUIRE(cond, msg) \
  if (!(cond)) return fail(LRVB_ERR_INVALID_ARGUMENT, msg)

FitOptions fit_options(const lrvb_fit_options* o) {
  FitOptions f;
  if (o) {
    f.tol = o->tol;
    f.max_sweeps = o->max_sweeps;
  }
  if (!(f.tol > 0.0) || f.max_sweeps < 1) throw ConfigError("fit options: tol > 0 and max_sweeps >= 1 required");
  return f;
}

struct Tracked {
  std::string name;
  Index coord;
};

lrvb_fit* run_fit(const ModelProblem& problem, std::vector<expfam::FactorState> init, const FitOptions& opts,
                  const std::vector<Tracked>& tracked) {
  const FitResult fit = coordinate_ascent(problem, std::move(init), opts);
  auto* out = new lrvb_fit;
  out->converged = fit.trace.converged;
  out->sweeps = fit.trace.sweeps;
  out->elbo = fit.trace.elbo.empty() ? 0.0 : fit.trace.elbo.back();
  const Index k = static_cast<Index>(tracked.size());
  out->means.resize(k);
  for (Index i = 0; i < k; ++i) {
    out->names.push_back(tracked[i].name);
    out->means(i) = fit.m(tracked[i].coord);
  }
  if (!fit.trace.converged) return out;
  try {
    const BlockDiagonal v = assemble_V(fit.factors, problem.layout());
    const HessianMatrix h = problem.hessian(fit.m);
    const LrvbResult r =
        problem.layout().z_size() == 0 ? lrvb_full(v, h, problem.layout()) : lrvb_schur(v, h, problem.layout());
    std::vector<Index> pos;
    for (const auto& t : tracked) pos.push_back(result_position(r, t.coord));
    out->cov.resize(k, k);
    out->mfvb_sd.resize(k);
    out->lrvb_sd.resize(k);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) out->cov(i, j) = r.sigma_hat(pos[i], pos[j]);
      out->mfvb_sd(i) = std::sqrt(r.mfvb_cov(pos[i], pos[i]));
      out->lrvb_sd(i) = std::sqrt(r.sigma_hat(pos[i], pos[i]));
    }
  } catch (...) {
    delete out;
    throw;
  }
  return out;
}

}  // namespace

extern "C" {

const char* lrvb_version(void) { return "1.0.0"; }

const char* lrvb_status_name(lrvb_status status) { return error_code_name(static_cast<ErrorCode>(status)); }

const char* lrvb_last_error(void) { return last_error.c_str(); }

int lrvb_exit_code(lrvb_status status) { return pipeline::exit_code(static_cast<ErrorCode>(status)); }

lrvb_status lrvb_config_from_file(const char* path, lrvb_config** out) {
  LRVB_REQUIRE(path && out, "lrvb_config_from_file: null argument");
  *out = nullptr;
  return guarded([&] {
    auto* c = new lrvb_config{pipeline::RunConfig::from_file(path)};
    c->hash = c->config.hash();
    *out = c;
    return LRVB_OK;
  });
}

lrvb_status lrvb_config_from_json(const char* json_text, lrvb_config** out) {
  LRVB_REQUIRE(json_text && out, "lrvb_config_from_json: null argument");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    auto* c = new lrvb_config{pipeline::RunConfig::from_json(j)};
    c->hash = c->config.hash();
    *out = c;
    return LRVB_OK;
  });
}

lrvb_status lrvb_config_set_seed(lrvb_config* config, uint64_t seed) {
  LRVB_REQUIRE(config, "lrvb_config_set_seed: null handle");
  return guarded([&] {
    config->config.set_seed(seed);
    config->hash = config->config.hash();
    return LRVB_OK;
  });
}

lrvb_status lrvb_config_set_output_dir(lrvb_config* config, const char* dir) {
  LRVB_REQUIRE(config && dir, "lrvb_config_set_output_dir: null argument");
  return guarded([&] {
    config->config.set_output_dir(dir);
    config->hash = config->config.hash();
    return LRVB_OK;
  });
}

lrvb_status lrvb_config_set_threads(lrvb_config* config, int threads) {
  LRVB_REQUIRE(config, "lrvb_config_set_threads: null handle");
  return guarded([&] {
    config->config.set_threads(threads);
    return LRVB_OK;
  });
}

lrvb_status lrvb_config_hash(const lrvb_config* config, const char** out) {
  LRVB_REQUIRE(config && out, "lrvb_config_hash: null argument");
  *out = config->hash.c_str();
  return LRVB_OK;
}

void lrvb_config_destroy(lrvb_config* config) { delete config; }

lrvb_status lrvb_run_command(lrvb_config* config, const char* command) {
  LRVB_REQUIRE(config && command, "lrvb_run_command: null argument");
  return guarded([&] {
    const pipeline::CommandResult r = pipeline::run_command(command, config->config);
    config->summary = r.summary.dump();
    if (r.status != ErrorCode::Ok) return fail(static_cast<lrvb_status>(r.status), r.message);
    return LRVB_OK;
  });
}

lrvb_status lrvb_config_summary(const lrvb_config* config, const char** out) {
  LRVB_REQUIRE(config && out, "lrvb_config_summary: null argument");
  *out = config->summary.c_str();
  return LRVB_OK;
}

void lrvb_fit_options_default(lrvb_fit_options* out) {
  if (!out) return;
  const FitOptions f;
  out->tol = f.tol;
  out->max_sweeps = f.max_sweeps;
}

void lrvb_np_priors_default(lrvb_np_priors* out) {
  if (!out) return;
  const NpPriors p;
  *out = {p.sigma_beta2, p.alpha_tau, p.beta_tau};
}

void lrvb_re_priors_default(lrvb_re_priors* out) {
  if (!out) return;
  const RePriors p;
  for (int i = 0; i < 4; ++i) out->sigma_beta[i] = p.sigma_beta(i / 2, i % 2);
  out->alpha_tau = p.alpha_tau;
  out->beta_tau = p.beta_tau;
  out->alpha_nu = p.alpha_nu;
  out->beta_nu = p.beta_nu;
}

void lrvb_gmm_priors_default(lrvb_gmm_priors* out) {
  if (!out) return;
  const GmmPriors p;
  *out = {p.mu_precision, p.wishart_inverse_scale, p.wishart_dof, p.dirichlet_alpha};
}

lrvb_status lrvb_fit_np(const double* y, const double* x, size_t n, const lrvb_np_priors* priors,
                        const lrvb_fit_options* options, lrvb_fit** out) {
  LRVB_REQUIRE(y && x && out && n > 0, "lrvb_fit_np: null argument or empty data");
  *out = nullptr;
  return guarded([&] {
    NpDataset d;
    d.y = Eigen::Map<const Eigen::VectorXd>(y, static_cast<Index>(n));
    d.x = Eigen::Map<const Eigen::VectorXd>(x, static_cast<Index>(n));
    NpPriors p;
    if (priors) {
      p.sigma_beta2 = priors->sigma_beta2;
      p.alpha_tau = priors->alpha_tau;
      p.beta_tau = priors->beta_tau;
    }
    const NpProblem problem(d, p);
    *out = run_fit(problem, problem.initial_factors(), fit_options(options),
                   {{"beta", NpProblem::kBeta}, {"tau", NpProblem::kTau}, {"log_tau", NpProblem::kLogTau}});
    return LRVB_OK;
  });
}

lrvb_status lrvb_fit_re(const double* y, const double* x, const double* r, const int* group, size_t n, int num_groups,
                        const lrvb_re_priors* priors, const lrvb_fit_options* options, lrvb_fit** out) {
  LRVB_REQUIRE(y && x && r && group && out && n > 0, "lrvb_fit_re: null argument or empty data");
  *out = nullptr;
  return guarded([&] {
    ReDataset d;
    const Index nn = static_cast<Index>(n);
    d.y = Eigen::Map<const Eigen::VectorXd>(y, nn);
    d.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>>(x, nn, 2);
    d.r = Eigen::Map<const Eigen::VectorXd>(r, nn);
    d.k.assign(group, group + n);
    d.num_groups = num_groups;
    RePriors p;
    if (priors) {
      for (int i = 0; i < 4; ++i) p.sigma_beta(i / 2, i % 2) = priors->sigma_beta[i];
      p.alpha_tau = priors->alpha_tau;
      p.beta_tau = priors->beta_tau;
      p.alpha_nu = priors->alpha_nu;
      p.beta_nu = priors->beta_nu;
    }
    const ReProblem problem(d, p);
    *out = run_fit(problem, problem.initial_factors(), fit_options(options),
                   {{"beta_1", ReProblem::kBeta},
                    {"beta_2", ReProblem::kBeta + 1},
                    {"tau", ReProblem::kTau},
                    {"nu", ReProblem::kNu}});
    return LRVB_OK;
  });
}

lrvb_status lrvb_fit_gmm(const double* x, size_t n, int p, int k, const lrvb_gmm_priors* priors,
                         const lrvb_fit_options* options, lrvb_fit** out) {
  LRVB_REQUIRE(x && out && n > 0 && p > 0 && k > 0, "lrvb_fit_gmm: null argument or empty data");
  *out = nullptr;
  return guarded([&] {
    GmmDataset d;
    d.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        x, static_cast<Index>(n), p);
    GmmPriors pr;
    if (priors) {
      pr.mu_precision = priors->mu_precision;
      pr.wishart_inverse_scale = priors->wishart_inverse_scale;
      pr.wishart_dof = priors->wishart_dof;
      pr.dirichlet_alpha = priors->dirichlet_alpha;
    }
    const GmmProblem problem(d, pr, k);
    std::vector<Tracked> tracked;
    for (const auto& [name, coord] : gmm_tracked(problem.index())) tracked.push_back({name, coord});
    *out = run_fit(problem, problem.moment_init(), fit_options(options), tracked);
    return LRVB_OK;
  });
}

lrvb_status lrvb_fit_mvn(const double* mean, const double* cov, size_t d, const lrvb_fit_options* options,
                         lrvb_fit** out) {
  LRVB_REQUIRE(mean && cov && out && d > 0, "lrvb_fit_mvn: null argument or empty target");
  *out = nullptr;
  return guarded([&] {
    const Index dd = static_cast<Index>(d);
    const MvnTarget target = MvnTarget::make(
        Eigen::Map<const Eigen::VectorXd>(mean, dd),
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cov, dd, dd));
    const MvnProblem problem(target);
    std::vector<Tracked> tracked;
    for (Index i = 0; i < dd; ++i) {
      tracked.push_back({"theta[" + std::to_string(i) + "]", problem.layout().block(static_cast<std::size_t>(i)).offset});
    }
    *out = run_fit(problem, problem.initial_factors(), fit_options(options), tracked);
    return LRVB_OK;
  });
}

lrvb_status lrvb_fit_converged(const lrvb_fit* fit, int* out) {
  LRVB_REQUIRE(fit && out, "lrvb_fit_converged: null argument");
  *out = fit->converged ? 1 : 0;
  return LRVB_OK;
}

lrvb_status lrvb_fit_sweeps(const lrvb_fit* fit, int* out) {
  LRVB_REQUIRE(fit && out, "lrvb_fit_sweeps: null argument");
  *out = fit->sweeps;
  return LRVB_OK;
}

lrvb_status lrvb_fit_elbo(const lrvb_fit* fit, double* out) {
  LRVB_REQUIRE(fit && out, "lrvb_fit_elbo: null argument");
  *out = fit->elbo;
  return LRVB_OK;
}

lrvb_status lrvb_fit_num_params(const lrvb_fit* fit, size_t* out) {
  LRVB_REQUIRE(fit && out, "lrvb_fit_num_params: null argument");
  *out = fit->names.size();
  return LRVB_OK;
}

lrvb_status lrvb_fit_param(const lrvb_fit* fit, size_t i, const char** name, double* mean) {
  LRVB_REQUIRE(fit, "lrvb_fit_param: null handle");
  LRVB_REQUIRE(i < fit->names.size(), "lrvb_fit_param: index out of range");
  if (name) *name = fit->names[i].c_str();
  if (mean) *mean = fit->means(static_cast<Index>(i));
  return LRVB_OK;
}

lrvb_status lrvb_fit_param_sd(const lrvb_fit* fit, size_t i, double* mfvb_sd, double* lrvb_sd) {
  LRVB_REQUIRE(fit, "lrvb_fit_param_sd: null handle");
  LRVB_REQUIRE(i < fit->names.size(), "lrvb_fit_param_sd: index out of range");
  if (!fit->converged) return fail(LRVB_ERR_NO_CONVERGENCE, "fit did not converge; no covariance is available");
  if (mfvb_sd) *mfvb_sd = fit->mfvb_sd(static_cast<Index>(i));
  if (lrvb_sd) *lrvb_sd = fit->lrvb_sd(static_cast<Index>(i));
  return LRVB_OK;
}

lrvb_status lrvb_fit_covariance(const lrvb_fit* fit, double* out, size_t capacity) {
  LRVB_REQUIRE(fit && out, "lrvb_fit_covariance: null argument");
  if (!fit->converged) return fail(LRVB_ERR_NO_CONVERGENCE, "fit did not converge; no covariance is available");
  const size_t k = fit->names.size();
  LRVB_REQUIRE(capacity >= k * k, "lrvb_fit_covariance: buffer too small");
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j) out[i * k + j] = fit->cov(static_cast<Index>(i), static_cast<Index>(j));
  return LRVB_OK;
}

void lrvb_fit_destroy(lrvb_fit* fit) { delete fit; }

}  // extern "C"
