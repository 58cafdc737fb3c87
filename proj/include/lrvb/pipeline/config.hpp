#pragma once

// Run configuration shared by the command-line subcommands.

#include "lrvb/models/gmm.hpp"
#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/models/random_effects.hpp"
#include "lrvb/optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace lrvb::pipeline {

enum class ModelId { Np, Re, Gmm, Mvn };

const char* model_name(ModelId id);

struct OracleOptions {
  Index draws = 10000;
  Index burnin = 1000;
  Index thin = 1;
  double min_ess = 500.0;
  double gate_sigmas = 3.0;  // compare gate: |LRVB - MCMC| <= gate_sigmas * MC standard error
};

struct MvnCertifyOptions {
  int replicates = 50;
  int min_dim = 2;
  int max_dim = 6;
  double max_condition = 100.0;
  double mean_tol = 1e-9;
  double cov_rel_tol = 1e-8;
  /// Fixed-point tolerance for the MVN fits; the mean check needs more than the default.
  double fit_tol = 1e-13;
};

struct RunConfig {
  ModelId model = ModelId::Np;
  std::uint64_t seed = 0;
  std::optional<std::string> dataset;  // CSV path; simulate from the config when absent
  std::string output_dir = "out";
  int threads = 1;

  models::NpSimConfig np_sim;
  models::NpPriors np_priors;
  models::ReSimConfig re_sim;
  models::RePriors re_priors;
  models::GmmSimConfig gmm_sim;
  models::GmmPriors gmm_priors;
  int gmm_k = 2;

  FitOptions fit;
  OracleOptions oracle;
  models::ScalingGrid scaling;
  Index scaling_gibbs_draws = 200;
  MvnCertifyOptions mvn;

  std::optional<std::string> fit_path;    // compare inputs; default to files in output_dir
  std::optional<std::string> chain_path;

  nlohmann::json source;  // the JSON this config was parsed from, after overrides

  /// Parse and validate. Unknown keys are rejected; "seed" is mandatory.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);

  void set_seed(std::uint64_t s);
  void set_output_dir(const std::string& dir);
  void set_threads(int n);

  /// FNV-1a 64-bit hash of the canonical (sorted-key) JSON form, as 16 hex digits.
  std::string hash() const;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace lrvb::pipeline
