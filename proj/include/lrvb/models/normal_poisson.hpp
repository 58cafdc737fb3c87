#pragma once

// Poisson regression with a Gaussian log-rate:
//   beta ~ N(0, sigma_beta^2), tau ~ Gamma(alpha_tau, beta_tau),
//   z_n | beta, tau ~ N(beta x_n, 1/tau), y_n | z_n ~ Poisson(exp(z_n)).
// Factors: beta (GaussianUV), tau (Gamma) in alpha; z_n (GaussianUV) in z.

#include "lrvb/engine.hpp"
#include "lrvb/models/summary.hpp"
#include "lrvb/optimizer.hpp"

#include <cstdint>

namespace lrvb::models {

struct NpDataset {
  VectorXd y;  // nonnegative integer counts
  VectorXd x;

  Index size() const { return y.size(); }
  void validate() const;
};

struct NpPriors {
  double sigma_beta2 = 10.0;
  double alpha_tau = 1.0;
  double beta_tau = 1.0;

  void validate() const;
};

struct NpSimConfig {
  int n = 500;
  double beta = 1.0;
  double tau = 1.0;
  double x_mean = 0.0;
  double x_sd = 1.0;
};

NpDataset np_simulate(const NpSimConfig& config, std::uint64_t seed);

/// E[exp z] for z ~ N(m1, m2 - m1^2).
double np_expected_exp_z(double mean, double second_moment);
/// Gradient of np_expected_exp_z with respect to (E z, E z^2).
Eigen::Vector2d np_expected_exp_z_grad(double mean, double second_moment);

struct NpZUpdate {
  double mean = 0.0;
  double variance = 1.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Maximises -tau/2 (a^2 + v) + (x E[tau] E[beta] + y) a - exp(a + v/2) + log(v)/2
/// over (a, v) by damped Newton in (a, log v). Convergence is on the gradient relative
/// to the magnitude of its terms. Throws NoConvergence after 100 steps.
NpZUpdate np_solve_z(double y, double x, double e_tau, double e_beta, double init_mean, double init_var,
                     double tol = 1e-10);

class NpProblem final : public ModelProblem {
 public:
  NpProblem(NpDataset data, NpPriors priors);

  const BlockLayout& layout() const override { return layout_; }
  double expected_log_posterior(const VectorXd& m) const override;
  HessianMatrix hessian(const VectorXd& m) const override;
  expfam::FactorState update_factor(std::size_t j, const VectorXd& m) const override;
  bool exact_updates() const override { return false; }

  const NpDataset& data() const { return data_; }
  const NpPriors& priors() const { return priors_; }

  expfam::FactorState update_beta(const VectorXd& m) const;
  expfam::FactorState update_tau(const VectorXd& m) const;
  expfam::FactorState update_z(const VectorXd& m, Index n) const;

  /// Moment-matched start: log(y + 1/2) for z, least squares for beta, residual precision for tau.
  std::vector<expfam::FactorState> initial_factors() const;

  static constexpr Index kBeta = 0, kBeta2 = 1, kTau = 2, kLogTau = 3;
  static Index z_mean_index(Index n) { return 4 + 2 * n; }

 private:
  NpDataset data_;
  NpPriors priors_;
  BlockLayout layout_;
  double sum_x2_ = 0.0;
};

struct NpLrvb {
  FitResult fit;
  LrvbResult lrvb;  // over (beta, beta^2, tau, log tau); cross_z_alpha holds Cov(z stats, alpha)
  ParamSummary beta;
  ParamSummary tau;
  ParamSummary log_tau;
};

NpLrvb np_lrvb(const NpDataset& data, const NpPriors& priors, const FitOptions& opts = {});

/// Cov(alpha stats, exp(z_n)) from the cross covariance of an np_lrvb result.
VectorXd np_exp_z_covariance(const NpLrvb& result, Index n);

}  // namespace lrvb::models
