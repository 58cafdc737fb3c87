#pragma once

// Exponential-family variational factors.
//
// Every factor is described by its sufficient-statistic vector T, natural
// parameter eta and log partition A, with log q(x) = eta'T(x) - A(eta)
// relative to a fixed base measure. The mean parameter is m = E_q[T] =
// grad A(eta) and the moment covariance Cov_q(T) = d m / d eta'.
//
// Statistic layouts:
//   GaussianUV      (x, x^2)
//   GaussianMV(P)   (x_1..x_P, vech(x x'))
//   Gamma           (tau, log tau)
//   Dirichlet(K)    (log pi_1, .., log pi_K)
//   Wishart(P)      (vech(Lambda), log|Lambda|)
//   Multinoulli(K)  (z_1, .., z_K)
//
// vech() stores the upper triangle row by row, (0,0), (0,1), .., (0,P-1),
// (1,1), .., (P-1,P-1), with no duplicated off-diagonal entries.

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace lrvb::expfam {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class FamilyKind { GaussianUV, GaussianMV, Gamma, Dirichlet, Wishart, Multinoulli };

struct FactorFamily {
  FamilyKind kind = FamilyKind::GaussianUV;
  int dim = 1;

  static FactorFamily gaussian_uv() { return {FamilyKind::GaussianUV, 1}; }
  static FactorFamily gaussian_mv(int p) { return {FamilyKind::GaussianMV, p}; }
  static FactorFamily gamma() { return {FamilyKind::Gamma, 1}; }
  static FactorFamily dirichlet(int k) { return {FamilyKind::Dirichlet, k}; }
  static FactorFamily wishart(int p) { return {FamilyKind::Wishart, p}; }
  static FactorFamily multinoulli(int k) { return {FamilyKind::Multinoulli, k}; }

  Index num_stats() const;
  std::string name() const;
  void validate() const;

  friend bool operator==(const FactorFamily&, const FactorFamily&) = default;
};

struct StatSlot {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

std::vector<StatSlot> stat_layout(const FactorFamily& family);

Index vech_size(int p);
Index vech_index(int a, int b, int p);
VectorXd vech(const MatrixXd& m);
MatrixXd unvech(const Eigen::Ref<const VectorXd>& v, int p);

VectorXd mean_from_natural(const FactorFamily& family, const VectorXd& eta);
VectorXd natural_from_mean(const FactorFamily& family, const VectorXd& mean);
double log_partition(const FactorFamily& family, const VectorXd& eta);

/// A factor with natural and mean parameters held consistently.
class FactorState {
 public:
  static FactorState from_natural(const FactorFamily& family, VectorXd eta);
  /// Inverts the mean map; uses root finding for Gamma, Dirichlet and Wishart.
  static FactorState from_mean(const FactorFamily& family, VectorXd mean);

  static FactorState gaussian_uv(double mean, double variance);
  static FactorState gaussian_mv(const VectorXd& mean, const MatrixXd& covariance);
  static FactorState gamma(double shape, double rate);
  static FactorState dirichlet(const VectorXd& concentration);
  static FactorState wishart(double dof, const MatrixXd& scale);
  /// Accepts the closed simplex; zero probabilities get -inf logits.
  static FactorState multinoulli(const VectorXd& probs);

  const FactorFamily& family() const { return family_; }
  const VectorXd& natural() const { return natural_; }
  const VectorXd& mean() const { return mean_; }
  std::vector<StatSlot> layout() const { return stat_layout(family_); }

 private:
  FactorState(FactorFamily family, VectorXd natural, VectorXd mean);

  FactorFamily family_;
  VectorXd natural_;
  VectorXd mean_;
};

using CovBlock = MatrixXd;

/// Exact Cov_q of the sufficient statistics.
CovBlock covariance_block(const FactorState& state);

double entropy(const FactorState& state);

// Standard-parameter views used by models and samplers.
struct GaussianParams {
  VectorXd mean;
  MatrixXd covariance;
};
struct GammaParams {
  double shape;
  double rate;
};
struct WishartParams {
  double dof;
  MatrixXd scale;
};

GaussianParams gaussian_params(const FactorState& state);
GammaParams gamma_params(const FactorState& state);
VectorXd dirichlet_params(const FactorState& state);
WishartParams wishart_params(const FactorState& state);

}  // namespace lrvb::expfam
