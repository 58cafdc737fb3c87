#pragma once

// Linear model with one random slope per group:
//   y_n | beta, z, tau ~ N(x_n' beta + r_n z_{k(n)}, 1/tau),  z_k | nu ~ N(0, 1/nu),
//   beta ~ N(0, Sigma_beta), tau ~ Gamma(alpha_tau, beta_tau), nu ~ Gamma(alpha_nu, beta_nu).
// Factors: beta (GaussianMV(2)), tau, nu (Gamma) in alpha; z_k (GaussianUV) in z.

#include "lrvb/engine.hpp"
#include "lrvb/models/summary.hpp"
#include "lrvb/optimizer.hpp"

#include <cstdint>

namespace lrvb::models {

struct ReDataset {
  VectorXd y;
  MatrixXd x;  // N x 2
  VectorXd r;
  std::vector<int> k;  // group of each observation, 0-based
  int num_groups = 0;

  Index size() const { return y.size(); }
  void validate() const;
};

struct RePriors {
  MatrixXd sigma_beta = 10.0 * MatrixXd::Identity(2, 2);
  double alpha_tau = 2.0;
  double beta_tau = 2.0;
  double alpha_nu = 2.0;
  double beta_nu = 2.0;

  void validate() const;
};

struct ReSimConfig {
  int n = 300;
  int k = 30;
  Eigen::Vector2d beta{1.0, 2.0};
  double tau = 1.0;
  double nu = 1.0;
  double x_sd = 1.0;
  /// r_n = r_x1_weight * x_{1n} + r_noise_sd * N(0, 1)
  double r_x1_weight = 1.0;
  double r_noise_sd = 0.4;
};

/// Observation n goes to group n mod K.
ReDataset re_simulate(const ReSimConfig& config, std::uint64_t seed);

class ReProblem final : public ModelProblem {
 public:
  ReProblem(ReDataset data, RePriors priors);

  const BlockLayout& layout() const override { return layout_; }
  double expected_log_posterior(const VectorXd& m) const override;
  HessianMatrix hessian(const VectorXd& m) const override;
  expfam::FactorState update_factor(std::size_t j, const VectorXd& m) const override;

  const ReDataset& data() const { return data_; }
  const RePriors& priors() const { return priors_; }

  expfam::FactorState update_beta(const VectorXd& m) const;
  expfam::FactorState update_tau(const VectorXd& m) const;
  expfam::FactorState update_nu(const VectorXd& m) const;
  expfam::FactorState update_z(const VectorXd& m, int k) const;

  /// Least-squares beta, residual precision for tau, prior mean for nu, z at zero.
  std::vector<expfam::FactorState> initial_factors() const;

  // Coordinates of m.
  static constexpr Index kBeta = 0;      // E beta_1, E beta_2
  static constexpr Index kBetaOuter = 2; // vech(E beta beta')
  static constexpr Index kTau = 5, kLogTau = 6, kNu = 7, kLogNu = 8;
  static Index z_mean_index(int k) { return 9 + 2 * static_cast<Index>(k); }

  const std::vector<std::vector<Index>>& groups() const { return groups_; }

 private:
  double expected_sq_residual(const VectorXd& m, Index n) const;

  ReDataset data_;
  RePriors priors_;
  MatrixXd prior_precision_;
  double prior_log_det_ = 0.0;
  BlockLayout layout_;
  std::vector<std::vector<Index>> groups_;
};

struct ReLrvb {
  FitResult fit;
  LrvbResult lrvb;  // over (beta, vech beta beta', tau, log tau, nu, log nu)
  std::vector<ParamSummary> params;  // beta_1, beta_2, tau, nu
};

ReLrvb re_lrvb(const ReDataset& data, const RePriors& priors, const FitOptions& opts = {});

}  // namespace lrvb::models
