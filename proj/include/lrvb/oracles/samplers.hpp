#pragma once

// Reference MCMC samplers for the hierarchical models. They share only data
// and prior types with the variational code.

#include "lrvb/models/gmm.hpp"
#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/models/random_effects.hpp"
#include "lrvb/oracles/diagnostics.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace lrvb::oracles {

struct SamplerOptions {
  Index draws = 10000;  // total iterations, burnin included
  Index burnin = 1000;
  std::uint64_t seed = 0;
  Index thin = 1;

  void validate() const;
};

struct NpSamplerOptions {
  std::vector<Index> track_z;        // observations whose z_n and exp(z_n) are recorded
  std::optional<double> fixed_tau;   // hold tau at this value instead of sampling it
  double target_acceptance = 0.35;
  bool translation_move = true;      // joint beta / z shift along x
  bool scale_move = true;            // joint rescaling of z - beta x and tau
};

/// Gibbs for beta and tau, adaptive random-walk Metropolis for each z_n.
/// Tracks beta, tau, log_tau, then z[n], exp_z[n] for each tracked n.
ChainSummary mh_gibbs_np(const models::NpDataset& data, const models::NpPriors& priors, const SamplerOptions& opts,
                         const NpSamplerOptions& np_opts = {});

/// Blocked Gibbs: (beta, z) jointly Gaussian, then tau and nu.
/// Tracks beta_1, beta_2, tau, log_tau, nu, log_nu, z[k].
ChainSummary gibbs_re(const models::ReDataset& data, const models::RePriors& priors, const SamplerOptions& opts);

struct GmmGibbsStart {
  std::vector<VectorXd> means;
  std::vector<MatrixXd> precisions;
  VectorXd pi;
};

struct GmmSamplerOptions {
  int k = 2;
  /// The sampler's mean prior is N(0, (a Lambda_k)^{-1}); a defaults to priors.mu_precision.
  std::optional<double> mean_prior_a;
  /// Starting point and label reference; when absent the sampler starts from a
  /// quantile split along the leading principal component.
  std::optional<GmmGibbsStart> start;
};

/// Conjugate Gibbs with a collapsed normal-Wishart draw per component.
/// Tracks mu[c][a], lambda[c][a,b] (a <= b), log_pi[c]. Sets label_switch when
/// any kept draw of the means is closer to a permuted reference than to the reference.
ChainSummary gibbs_gmm(const models::GmmDataset& data, const models::GmmPriors& priors, const SamplerOptions& opts,
                       const GmmSamplerOptions& gmm_opts = {});

// Distribution helpers, exposed for testing.

/// Wishart(scale, dof) draw by the Bartlett decomposition; E = dof * scale.
MatrixXd sample_wishart(const MatrixXd& scale, double dof, std::mt19937_64& rng);
VectorXd sample_dirichlet(const VectorXd& alpha, std::mt19937_64& rng);
/// Gamma with shape and rate.
double sample_gamma(double shape, double rate, std::mt19937_64& rng);

}  // namespace lrvb::oracles
