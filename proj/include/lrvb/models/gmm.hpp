#pragma once

// Finite mixture of multivariate normals:
//   z_n ~ Multinoulli(pi), x_n | z_n = k ~ N(mu_k, Lambda_k^{-1}),
//   mu_k ~ N(0, P_mu^{-1}), Lambda_k ~ Wishart(W0, n0), pi ~ Dirichlet(alpha0).
// Factors: mu_k (GaussianMV), Lambda_k (Wishart), pi (Dirichlet) in alpha; z_n (Multinoulli) in z.

#include "lrvb/engine.hpp"
#include "lrvb/models/summary.hpp"
#include "lrvb/optimizer.hpp"

#include <cstdint>
#include <string>

namespace lrvb::models {

struct GmmDataset {
  MatrixXd x;  // N x P

  Index size() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
  void validate() const;
};

struct GmmPriors {
  double mu_precision = 0.01;   // P_mu = mu_precision * I
  double wishart_inverse_scale = 0.01;  // W0^{-1} = wishart_inverse_scale * I
  double wishart_dof = 1.0;
  double dirichlet_alpha = 5.0;

  void validate() const;
};

struct GmmTruth {
  VectorXd pi;
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covariances;
  std::vector<MatrixXd> precisions;
  std::vector<int> labels;
};

struct GmmSimConfig {
  int n = 10000;
  int k = 2;
  int p = 2;
  /// Empty vectors select the defaults below.
  VectorXd pi;                      // default uniform
  std::vector<VectorXd> means;      // default mu_k = separation * k * (1, .., 1) / sqrt(P)
  std::vector<MatrixXd> covariances;  // default Sigma_ab = rho_k^{|a-b|}, rho_k = correlation * (-1)^k
  double separation = 3.0;
  double correlation = 0.3;
};

struct GmmSimulation {
  GmmDataset data;
  GmmTruth truth;
};

GmmSimulation gmm_simulate(const GmmSimConfig& config, std::uint64_t seed);

/// Offsets of each factor's statistics within m.
struct GmmIndex {
  int k = 0;
  int p = 0;
  Index mu_size() const;      // P + P(P+1)/2
  Index lambda_size() const;  // P(P+1)/2 + 1
  Index mu(int c) const;
  Index mu_outer(int c) const;
  Index lambda(int c) const;
  Index log_det(int c) const;
  Index log_pi(int c) const;
  Index alpha_size() const;
  Index z(Index n, int c) const;
};

class GmmProblem final : public ModelProblem {
 public:
  GmmProblem(GmmDataset data, GmmPriors priors, int k);

  const BlockLayout& layout() const override { return layout_; }
  double expected_log_posterior(const VectorXd& m) const override;
  HessianMatrix hessian(const VectorXd& m) const override;
  expfam::FactorState update_factor(std::size_t j, const VectorXd& m) const override;

  const GmmDataset& data() const { return data_; }
  const GmmPriors& priors() const { return priors_; }
  const GmmIndex& index() const { return index_; }
  int num_components() const { return index_.k; }

  expfam::FactorState update_mu(const VectorXd& m, int c) const;
  expfam::FactorState update_lambda(const VectorXd& m, int c) const;
  expfam::FactorState update_pi(const VectorXd& m) const;
  expfam::FactorState update_z(const VectorXd& m, Index n) const;

  /// Factors centred on the generating parameters, with z at the true responsibilities.
  std::vector<expfam::FactorState> truth_init(const GmmTruth& truth) const;
  /// Hard assignment by quantiles of the leading principal component, then moment matching.
  std::vector<expfam::FactorState> moment_init() const;

 private:
  struct Globals {
    std::vector<VectorXd> mu;
    std::vector<MatrixXd> mu_outer;
    std::vector<MatrixXd> lambda;
    VectorXd log_det;
    VectorXd log_pi;
  };
  Globals globals(const VectorXd& m) const;
  /// Q_nk = E[(x_n - mu_k)' Lambda_k (x_n - mu_k)]
  double expected_quadratic(const Globals& g, Index n, int c) const;
  void check_component_mass(double n_k, int c) const;
  std::vector<expfam::FactorState> globals_from_assignment(const MatrixXd& z) const;

  GmmDataset data_;
  GmmPriors priors_;
  GmmIndex index_;
  BlockLayout layout_;
};

struct GmmLrvb {
  FitResult fit;
  LrvbResult lrvb;                   // over all alpha statistics
  std::vector<ParamSummary> params;  // mu[k][a], lambda[k][a,b], log_pi[k]
  std::vector<Index> param_coords;   // coordinate of m for each entry of params
};

GmmLrvb gmm_lrvb(const GmmProblem& problem, std::vector<expfam::FactorState> init, const FitOptions& opts = {});

/// Names and m-coordinates of the tracked scalars (mu, Lambda entries, log pi).
std::vector<std::pair<std::string, Index>> gmm_tracked(const GmmIndex& index);

struct ScalingRow {
  Index n = 0;
  int k = 0;
  int p = 0;
  int rep = 0;
  std::string phase;  // "fit", "assembly", "alpha_solve", "lrvb_total"
  double seconds = 0.0;
};

struct ScalingGrid {
  std::vector<int> n_values;
  std::vector<int> p_values;
  std::vector<int> k_values;
  int reps = 3;
};

/// Times LRVB on simulated mixtures over the grid (every combination of N, K and P).
std::vector<ScalingRow> gmm_scaling_run(const ScalingGrid& grid, std::uint64_t seed, const GmmPriors& priors = {});

/// Least-squares slope of log(median lrvb_total seconds) against log(varying).
double scaling_slope(const std::vector<ScalingRow>& rows, const std::string& against);

}  // namespace lrvb::models
