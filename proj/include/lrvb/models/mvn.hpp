#pragma once

// Multivariate normal target approximated by a fully factorised Gaussian.
// Each factor carries (theta_j, theta_j^2); the MFVB means are exact and the
// linear response covariance recovers Sigma exactly.

#include "lrvb/engine.hpp"
#include "lrvb/optimizer.hpp"

#include <random>

namespace lrvb::models {

struct MvnTarget {
  VectorXd mean;
  MatrixXd cov;
  MatrixXd precision;

  /// Validates Sigma (symmetric PD) and caches its inverse.
  static MvnTarget make(VectorXd mean, MatrixXd cov);
  Index dim() const { return mean.size(); }
};

/// Random target with condition number of Sigma at most `max_condition`.
MvnTarget random_mvn_target(int dim, double max_condition, std::mt19937_64& rng);

/// New E[theta_j] given the current first moments of the other coordinates.
double mvn_coordinate_update(const MvnTarget& target, const VectorXd& first_moments, Index j);

class MvnProblem final : public ModelProblem {
 public:
  explicit MvnProblem(MvnTarget target);

  const BlockLayout& layout() const override { return layout_; }
  /// Normalised E_q[log N(theta | mu, Sigma)].
  double expected_log_posterior(const VectorXd& m) const override;
  HessianMatrix hessian(const VectorXd& m) const override;
  expfam::FactorState update_factor(std::size_t j, const VectorXd& m) const override;

  const MvnTarget& target() const { return target_; }
  VectorXd first_moments(const VectorXd& m) const;
  /// Factors at zero mean with the MFVB variances.
  std::vector<expfam::FactorState> initial_factors() const;

 private:
  MvnTarget target_;
  BlockLayout layout_;
};

struct MvnLrvb {
  FitResult fit;
  LrvbResult lrvb;
  MatrixXd first_moment_sigma;  // Sigma_hat restricted to (theta_1..theta_D)
  VectorXd first_moment_means;
};

MvnLrvb mvn_lrvb(const MvnTarget& target, const FitOptions& opts = {});

}  // namespace lrvb::models
