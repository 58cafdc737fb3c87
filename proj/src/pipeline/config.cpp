#include "lrvb/pipeline/config.hpp"

#include "lrvb/error.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lrvb::pipeline {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void read_index(const json& j, const char* key, Index& out) {
  long long v = out;
  read(j, key, v);
  out = static_cast<Index>(v);
}

ModelId parse_model(const std::string& s) {
  if (s == "np") return ModelId::Np;
  if (s == "re") return ModelId::Re;
  if (s == "gmm") return ModelId::Gmm;
  if (s == "mvn") return ModelId::Mvn;
  throw ConfigError("config: model must be one of np, re, gmm, mvn (got '" + s + "')");
}

void parse_simulate(const json& j, RunConfig& c) {
  switch (c.model) {
    case ModelId::Np:
      check_keys(j, "simulate", {"n", "beta", "tau", "x_mean", "x_sd"});
      read(j, "n", c.np_sim.n);
      read(j, "beta", c.np_sim.beta);
      read(j, "tau", c.np_sim.tau);
      read(j, "x_mean", c.np_sim.x_mean);
      read(j, "x_sd", c.np_sim.x_sd);
      break;
    case ModelId::Re: {
      check_keys(j, "simulate", {"n", "k", "beta", "tau", "nu", "x_sd", "r_x1_weight", "r_noise_sd"});
      read(j, "n", c.re_sim.n);
      read(j, "k", c.re_sim.k);
      if (j.contains("beta")) {
        std::vector<double> b;
        read(j, "beta", b);
        if (b.size() != 2) throw ConfigError("config: simulate.beta must have 2 entries");
        c.re_sim.beta = Eigen::Vector2d(b[0], b[1]);
      }
      read(j, "tau", c.re_sim.tau);
      read(j, "nu", c.re_sim.nu);
      read(j, "x_sd", c.re_sim.x_sd);
      read(j, "r_x1_weight", c.re_sim.r_x1_weight);
      read(j, "r_noise_sd", c.re_sim.r_noise_sd);
      break;
    }
    case ModelId::Gmm:
      check_keys(j, "simulate", {"n", "k", "p", "separation", "correlation"});
      read(j, "n", c.gmm_sim.n);
      read(j, "k", c.gmm_sim.k);
      read(j, "p", c.gmm_sim.p);
      read(j, "separation", c.gmm_sim.separation);
      read(j, "correlation", c.gmm_sim.correlation);
      break;
    case ModelId::Mvn:
      throw ConfigError("config: the mvn model has no 'simulate' section; use 'mvn'");
  }
}

void parse_priors(const json& j, RunConfig& c) {
  switch (c.model) {
    case ModelId::Np:
      check_keys(j, "priors", {"sigma_beta2", "alpha_tau", "beta_tau"});
      read(j, "sigma_beta2", c.np_priors.sigma_beta2);
      read(j, "alpha_tau", c.np_priors.alpha_tau);
      read(j, "beta_tau", c.np_priors.beta_tau);
      break;
    case ModelId::Re:
      check_keys(j, "priors", {"sigma_beta", "alpha_tau", "beta_tau", "alpha_nu", "beta_nu"});
      if (j.contains("sigma_beta")) {
        const json& s = j.at("sigma_beta");
        if (s.is_number()) {
          c.re_priors.sigma_beta = s.get<double>() * MatrixXd::Identity(2, 2);
        } else {
          std::vector<std::vector<double>> rows;
          read(j, "sigma_beta", rows);
          if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2) {
            throw ConfigError("config: priors.sigma_beta must be a number or a 2x2 array");
          }
          c.re_priors.sigma_beta << rows[0][0], rows[0][1], rows[1][0], rows[1][1];
        }
      }
      read(j, "alpha_tau", c.re_priors.alpha_tau);
      read(j, "beta_tau", c.re_priors.beta_tau);
      read(j, "alpha_nu", c.re_priors.alpha_nu);
      read(j, "beta_nu", c.re_priors.beta_nu);
      break;
    case ModelId::Gmm:
      check_keys(j, "priors", {"mu_precision", "wishart_inverse_scale", "wishart_dof", "dirichlet_alpha"});
      read(j, "mu_precision", c.gmm_priors.mu_precision);
      read(j, "wishart_inverse_scale", c.gmm_priors.wishart_inverse_scale);
      read(j, "wishart_dof", c.gmm_priors.wishart_dof);
      read(j, "dirichlet_alpha", c.gmm_priors.dirichlet_alpha);
      break;
    case ModelId::Mvn:
      throw ConfigError("config: the mvn model has no priors");
  }
}

void validate(const RunConfig& c) {
  if (c.output_dir.empty()) throw ConfigError("config: output_dir is empty");
  if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
  if (!(c.fit.tol > 0.0) || c.fit.max_sweeps < 1) throw ConfigError("config: fit.tol > 0 and fit.max_sweeps >= 1 required");
  if (c.oracle.draws < 1 || c.oracle.burnin < 0 || c.oracle.thin < 1 || c.oracle.burnin >= c.oracle.draws) {
    throw ConfigError("config: oracle needs draws > burnin >= 0 and thin >= 1");
  }
  if (!(c.oracle.gate_sigmas > 0.0) || c.oracle.min_ess < 0.0) throw ConfigError("config: bad oracle gates");
  if (c.gmm_k < 1) throw ConfigError("config: components must be >= 1");
  if (c.mvn.replicates < 1 || c.mvn.min_dim < 1 || c.mvn.max_dim < c.mvn.min_dim || !(c.mvn.max_condition >= 1.0)) {
    throw ConfigError("config: bad mvn section");
  }
  if (c.scaling.reps < 1) throw ConfigError("config: scaling.reps must be >= 1");
  for (const auto* v : {&c.scaling.n_values, &c.scaling.p_values, &c.scaling.k_values}) {
    for (int x : *v)
      if (x < 1) throw ConfigError("config: scaling grid values must be positive");
  }
  switch (c.model) {
    case ModelId::Np:
      c.np_priors.validate();
      if (c.np_sim.n < 1 || !(c.np_sim.tau > 0.0) || !(c.np_sim.x_sd >= 0.0)) throw ConfigError("config: bad np simulate section");
      break;
    case ModelId::Re:
      c.re_priors.validate();
      if (c.re_sim.n < 1 || c.re_sim.k < 1 || c.re_sim.k > c.re_sim.n) throw ConfigError("config: bad re simulate section");
      break;
    case ModelId::Gmm:
      c.gmm_priors.validate();
      if (c.gmm_sim.n < 1 || c.gmm_sim.k < 1 || c.gmm_sim.p < 1) throw ConfigError("config: bad gmm simulate section");
      break;
    case ModelId::Mvn:
      break;
  }
}

}  // namespace

const char* model_name(ModelId id) {
  switch (id) {
    case ModelId::Np: return "np";
    case ModelId::Re: return "re";
    case ModelId::Gmm: return "gmm";
    case ModelId::Mvn: return "mvn";
  }
  return "unknown";
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, "config", {"model", "seed", "dataset", "output_dir", "threads", "simulate", "priors", "components",
                           "fit", "oracle", "scaling", "mvn", "compare"});
  if (!j.contains("model")) throw ConfigError("config: 'model' is required");
  if (!j.contains("seed")) throw ConfigError("config: 'seed' is required");
  if (!j.at("seed").is_number_unsigned()) throw ConfigError("config: 'seed' must be a nonnegative integer");
  RunConfig c;
  c.model = parse_model(j.at("model").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  read(j, "output_dir", c.output_dir);
  read(j, "threads", c.threads);
  if (j.contains("simulate")) parse_simulate(j.at("simulate"), c);
  // The fitted number of components defaults to the simulated one and vice versa.
  const bool sim_k = c.model == ModelId::Gmm && j.contains("simulate") && j.at("simulate").contains("k");
  c.gmm_k = c.gmm_sim.k;
  read(j, "components", c.gmm_k);
  if (!sim_k) c.gmm_sim.k = c.gmm_k;
  if (j.contains("priors")) parse_priors(j.at("priors"), c);
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    check_keys(f, "fit", {"tol", "max_sweeps", "monotone_slack"});
    read(f, "tol", c.fit.tol);
    read(f, "max_sweeps", c.fit.max_sweeps);
    read(f, "monotone_slack", c.fit.monotone_slack);
  }
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    check_keys(o, "oracle", {"draws", "burnin", "thin", "min_ess", "gate_sigmas"});
    read_index(o, "draws", c.oracle.draws);
    read_index(o, "burnin", c.oracle.burnin);
    read_index(o, "thin", c.oracle.thin);
    read(o, "min_ess", c.oracle.min_ess);
    read(o, "gate_sigmas", c.oracle.gate_sigmas);
  }
  c.scaling.n_values = {2000, 4000, 8000, 16000};
  c.scaling.p_values = {2};
  c.scaling.k_values = {2};
  if (j.contains("scaling")) {
    const json& s = j.at("scaling");
    check_keys(s, "scaling", {"n_values", "p_values", "k_values", "reps", "gibbs_draws"});
    read(s, "n_values", c.scaling.n_values);
    read(s, "p_values", c.scaling.p_values);
    read(s, "k_values", c.scaling.k_values);
    read(s, "reps", c.scaling.reps);
    read_index(s, "gibbs_draws", c.scaling_gibbs_draws);
  }
  if (j.contains("mvn")) {
    const json& m = j.at("mvn");
    check_keys(m, "mvn", {"replicates", "min_dim", "max_dim", "max_condition", "mean_tol", "cov_rel_tol", "fit_tol"});
    read(m, "replicates", c.mvn.replicates);
    read(m, "min_dim", c.mvn.min_dim);
    read(m, "max_dim", c.mvn.max_dim);
    read(m, "max_condition", c.mvn.max_condition);
    read(m, "mean_tol", c.mvn.mean_tol);
    read(m, "cov_rel_tol", c.mvn.cov_rel_tol);
    read(m, "fit_tol", c.mvn.fit_tol);
  }
  if (j.contains("compare")) {
    const json& m = j.at("compare");
    check_keys(m, "compare", {"fit", "chain"});
    if (m.contains("fit")) c.fit_path = m.at("fit").get<std::string>();
    if (m.contains("chain")) c.chain_path = m.at("chain").get<std::string>();
  }
  c.source = j;
  validate(c);
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  source["seed"] = s;
}

void RunConfig::set_output_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("output directory is empty");
  output_dir = dir;
  source["output_dir"] = dir;
}

void RunConfig::set_threads(int n) {
  if (n < 1) throw ConfigError("threads must be >= 1");
  threads = n;
  source["threads"] = n;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::hash() const {
  // Output location and thread count do not change numeric results, so they are left out.
  json canonical = source;
  canonical.erase("output_dir");
  canonical.erase("threads");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return buf;
}

}  // namespace lrvb::pipeline
