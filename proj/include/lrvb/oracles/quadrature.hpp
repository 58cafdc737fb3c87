#pragma once

// Tensor-grid quadrature for posteriors of dimension at most 4.

#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/oracles/finite_diff.hpp"

#include <functional>

namespace lrvb::oracles {

using VectorFunction = std::function<VectorXd(const VectorXd&)>;

struct QuadratureSpec {
  ScalarFunction log_density;  // unnormalised, in the integration coordinates
  VectorXd lower;
  VectorXd upper;
  VectorFunction functionals;  // quantities whose posterior mean and covariance are wanted
  double rel_tol = 1e-6;
  int initial_intervals = 16;
  int max_intervals = 256;
};

struct QuadratureResult {
  VectorXd mean;
  MatrixXd cov;
  double log_normaliser = 0.0;
  int intervals = 0;  // per dimension, at the final refinement
  int refinements = 0;
};

/// Trapezoid rule on successively doubled grids, Richardson-extrapolated, until
/// two successive estimates of every moment agree to rel_tol.
/// Throws DimensionTooLarge above 4 dimensions and NoConvergence if max_intervals is reached.
QuadratureResult quadrature_posterior(const QuadratureSpec& spec);

/// Normal-Poisson posterior for N <= 2 observations. beta is integrated out
/// analytically; the grid covers (log tau, z_1, .., z_N) in a box of +-width
/// Laplace standard deviations around the mode. Functionals: beta, tau, log_tau, z_n..., exp(z_n)...
QuadratureResult np_quadrature(const models::NpDataset& data, const models::NpPriors& priors, double width = 10.0,
                               double rel_tol = 1e-6);

}  // namespace lrvb::oracles
