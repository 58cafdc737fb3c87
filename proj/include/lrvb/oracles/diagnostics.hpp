#pragma once

// MCMC output summaries: effective sample size and Monte Carlo standard errors.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace lrvb::oracles {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Initial-positive-sequence ESS: N / (1 + 2 sum rho_t), truncated at the first
/// nonpositive pair sum rho_{2k} + rho_{2k+1}, capped at N. A constant chain
/// gives 0 and sets *constant (when given). Throws TooFewDraws below 100 draws.
double ess(const Eigen::Ref<const VectorXd>& draws, bool* constant = nullptr);

/// Batch-means standard error of the sample standard deviation.
double sd_standard_error(const Eigen::Ref<const VectorXd>& draws, int batches = 50);

/// Batch-means standard error of the sample mean.
double mean_standard_error(const Eigen::Ref<const VectorXd>& draws, int batches = 50);

struct ChainSummary {
  std::vector<std::string> names;
  MatrixXd draws;  // kept draws x functionals
  VectorXd mean;
  VectorXd sd;
  VectorXd ess;
  VectorXd mean_se;
  VectorXd sd_se;
  MatrixXd cov;
  std::uint64_t seed = 0;
  Index num_draws = 0;
  Index burnin = 0;
  bool label_switch = false;
  std::vector<std::string> warnings;

  Index index_of(const std::string& name) const;
  double min_ess() const;
};

ChainSummary summarize_chain(std::vector<std::string> names, MatrixXd draws, std::uint64_t seed, Index burnin);

}  // namespace lrvb::oracles
