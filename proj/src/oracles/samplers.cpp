#include "lrvb/oracles/samplers.hpp"

#include "lrvb/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace lrvb::oracles {

using models::GmmDataset;
using models::GmmPriors;
using models::NpDataset;
using models::NpPriors;
using models::ReDataset;
using models::RePriors;

void SamplerOptions::validate() const {
  if (burnin < 0 || draws <= burnin) throw ConfigError("sampler: need draws > burnin >= 0");
  if (thin < 1) throw ConfigError("sampler: thin must be at least 1");
  if ((draws - burnin) / thin < 100) throw TooFewDraws("sampler: fewer than 100 kept draws");
}

double sample_gamma(double shape, double rate, std::mt19937_64& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw NumericalError("sample_gamma: nonpositive parameter");
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

VectorXd sample_dirichlet(const VectorXd& alpha, std::mt19937_64& rng) {
  VectorXd g(alpha.size());
  for (Index i = 0; i < alpha.size(); ++i) g(i) = sample_gamma(alpha(i), 1.0, rng);
  return g / g.sum();
}

namespace {

Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& a, const char* what) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix not positive definite");
  return llt;
}

VectorXd standard_normal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> norm;
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) out(i) = norm(rng);
  return out;
}

Index kept_count(const SamplerOptions& opts) { return (opts.draws - opts.burnin + opts.thin - 1) / opts.thin; }

bool keep(const SamplerOptions& opts, Index iter) {
  return iter >= opts.burnin && (iter - opts.burnin) % opts.thin == 0;
}

}  // namespace

MatrixXd sample_wishart(const MatrixXd& scale, double dof, std::mt19937_64& rng) {
  const Index p = scale.rows();
  if (!(dof > p - 1)) throw NumericalError("sample_wishart: dof must exceed P - 1");
  const MatrixXd l = checked_llt(scale, "sample_wishart").matrixL();
  std::normal_distribution<double> norm;
  MatrixXd a = MatrixXd::Zero(p, p);
  for (Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(2.0 * sample_gamma(0.5 * (dof - static_cast<double>(i)), 1.0, rng));
    for (Index j = 0; j < i; ++j) a(i, j) = norm(rng);
  }
  const MatrixXd la = l * a;
  MatrixXd out = la * la.transpose();
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------- normal-Poisson

ChainSummary mh_gibbs_np(const NpDataset& data, const NpPriors& priors, const SamplerOptions& opts,
                         const NpSamplerOptions& np_opts) {
  data.validate();
  priors.validate();
  opts.validate();
  const Index n = data.size();
  for (Index t : np_opts.track_z) {
    if (t < 0 || t >= n) throw ConfigError("mh_gibbs_np: tracked z index out of range");
  }
  if (np_opts.fixed_tau && !(*np_opts.fixed_tau > 0.0)) throw ConfigError("mh_gibbs_np: fixed tau must be positive");

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif;
  auto log_u = [&]() { return std::log(unif(rng)); };

  const VectorXd& x = data.x;
  const VectorXd& y = data.y;
  const double sum_x2 = x.squaredNorm();

  // Start at z = log(y + 1/2), beta by least squares, tau from the residuals.
  VectorXd z = (y.array() + 0.5).log();
  double beta = sum_x2 > 0.0 ? x.dot(z) / (sum_x2 + 1.0 / priors.sigma_beta2) : 0.0;
  double tau = np_opts.fixed_tau ? *np_opts.fixed_tau
                                 : 1.0 / std::max(1e-3, (z - beta * x).squaredNorm() / static_cast<double>(n));

  VectorXd step = VectorXd::Constant(n, 0.5);
  double shift_step = 0.1;
  double scale_step = 0.1;
  std::vector<Index> accepts(n, 0), proposals(n, 0);
  Index shift_accepts = 0, shift_proposals = 0;
  Index scale_accepts = 0, scale_proposals = 0;

  std::vector<std::string> names = {"beta", "tau", "log_tau"};
  for (Index t : np_opts.track_z) names.push_back("z[" + std::to_string(t) + "]");
  for (Index t : np_opts.track_z) names.push_back("exp_z[" + std::to_string(t) + "]");
  const Index nt = static_cast<Index>(np_opts.track_z.size());
  MatrixXd draws(kept_count(opts), 3 + 2 * nt);
  Index row = 0;

  auto z_log_target = [&](double zn, Index i) {
    const double r = zn - beta * x(i);
    return -0.5 * tau * r * r + y(i) * zn - std::exp(zn);
  };

  for (Index iter = 0; iter < opts.draws; ++iter) {
    const bool adapting = iter < opts.burnin;

    // z_n | beta, tau, y_n: random-walk Metropolis.
    for (Index i = 0; i < n; ++i) {
      const double prop = z(i) + step(i) * norm(rng);
      const bool ok = log_u() < z_log_target(prop, i) - z_log_target(z(i), i);
      if (ok) z(i) = prop;
      if (adapting) {
        step(i) *= std::exp(((ok ? 1.0 : 0.0) - np_opts.target_acceptance) / std::sqrt(1.0 + iter));
      } else {
        ++proposals[i];
        if (ok) ++accepts[i];
      }
    }

    // Joint move beta -> beta + d, z_n -> z_n + d x_n leaves z - beta x unchanged.
    if (np_opts.translation_move && sum_x2 > 0.0) {
      const double d = shift_step * norm(rng);
      double delta = -0.5 * ((beta + d) * (beta + d) - beta * beta) / priors.sigma_beta2;
      for (Index i = 0; i < n; ++i) {
        const double zn = z(i) + d * x(i);
        delta += y(i) * d * x(i) - (std::exp(zn) - std::exp(z(i)));
      }
      const bool ok = log_u() < delta;
      if (ok) {
        beta += d;
        z += d * x;
      }
      if (adapting) {
        shift_step *= std::exp(((ok ? 1.0 : 0.0) - np_opts.target_acceptance) / std::sqrt(1.0 + iter));
      } else {
        ++shift_proposals;
        if (ok) ++shift_accepts;
      }
    }

    // Joint move z_n -> beta x_n + c (z_n - beta x_n), tau -> tau / c^2. The Gaussian
    // term and the Jacobian c^(N-2) leave a factor c^-2 besides prior and likelihood.
    if (np_opts.scale_move && !np_opts.fixed_tau) {
      const double log_c = scale_step * norm(rng);
      const double c = std::exp(log_c);
      const double tau_new = tau / (c * c);
      double delta = -2.0 * log_c - 2.0 * (priors.alpha_tau - 1.0) * log_c - priors.beta_tau * (tau_new - tau);
      VectorXd z_new(n);
      for (Index i = 0; i < n; ++i) {
        z_new(i) = beta * x(i) + c * (z(i) - beta * x(i));
        delta += y(i) * (z_new(i) - z(i)) - (std::exp(z_new(i)) - std::exp(z(i)));
      }
      const bool ok = log_u() < delta;
      if (ok) {
        z = std::move(z_new);
        tau = tau_new;
      }
      if (adapting) {
        scale_step *= std::exp(((ok ? 1.0 : 0.0) - np_opts.target_acceptance) / std::sqrt(1.0 + iter));
      } else {
        ++scale_proposals;
        if (ok) ++scale_accepts;
      }
    }

    // beta | z, tau
    const double prec = 1.0 / priors.sigma_beta2 + tau * sum_x2;
    beta = tau * x.dot(z) / prec + norm(rng) / std::sqrt(prec);

    // tau | beta, z
    if (!np_opts.fixed_tau) {
      tau = sample_gamma(priors.alpha_tau + 0.5 * static_cast<double>(n),
                         priors.beta_tau + 0.5 * (z - beta * x).squaredNorm(), rng);
    }

    if (keep(opts, iter)) {
      draws(row, 0) = beta;
      draws(row, 1) = tau;
      draws(row, 2) = std::log(tau);
      for (Index t = 0; t < nt; ++t) {
        draws(row, 3 + t) = z(np_opts.track_z[t]);
        draws(row, 3 + nt + t) = std::exp(z(np_opts.track_z[t]));
      }
      ++row;
    }
  }

  ChainSummary out = summarize_chain(std::move(names), std::move(draws), opts.seed, opts.burnin);
  out.num_draws = opts.draws;
  double worst = 0.5;
  for (Index i = 0; i < n; ++i) {
    const double rate = proposals[i] ? static_cast<double>(accepts[i]) / proposals[i] : 0.0;
    if (std::abs(rate - 0.4) > std::abs(worst - 0.4)) worst = rate;
  }
  if (worst < 0.1 || worst > 0.7) {
    out.warnings.push_back("AcceptanceOutOfRange: z acceptance rate " + std::to_string(worst));
  }
  for (const auto& [what, acc, prop] : {std::tuple{"translation", shift_accepts, shift_proposals},
                                         std::tuple{"scale", scale_accepts, scale_proposals}}) {
    if (prop == 0) continue;
    const double rate = static_cast<double>(acc) / prop;
    if (rate < 0.1 || rate > 0.7) {
      out.warnings.push_back(std::string("AcceptanceOutOfRange: ") + what + " acceptance rate " + std::to_string(rate));
    }
  }
  return out;
}

// ---------------------------------------------------------------- random effects

ChainSummary gibbs_re(const ReDataset& data, const RePriors& priors, const SamplerOptions& opts) {
  data.validate();
  priors.validate();
  opts.validate();
  const Index n = data.size();
  const int k = data.num_groups;
  const Index d = 2 + k;

  // Design for (beta_1, beta_2, z_1..z_K).
  MatrixXd design = MatrixXd::Zero(n, d);
  design.leftCols(2) = data.x;
  for (Index i = 0; i < n; ++i) design(i, 2 + data.k[i]) = data.r(i);
  const MatrixXd dtd = design.transpose() * design;
  const VectorXd dty = design.transpose() * data.y;
  const MatrixXd beta_prior_prec = checked_llt(priors.sigma_beta, "gibbs_re prior").solve(MatrixXd::Identity(2, 2));

  std::mt19937_64 rng(opts.seed);
  double tau = 1.0, nu = 1.0;
  VectorXd coef = VectorXd::Zero(d);

  std::vector<std::string> names = {"beta_1", "beta_2", "tau", "log_tau", "nu", "log_nu"};
  for (int g = 0; g < k; ++g) names.push_back("z[" + std::to_string(g) + "]");
  MatrixXd draws(kept_count(opts), 6 + k);
  Index row = 0;

  for (Index iter = 0; iter < opts.draws; ++iter) {
    MatrixXd prec = tau * dtd;
    prec.topLeftCorner(2, 2) += beta_prior_prec;
    prec.diagonal().tail(k).array() += nu;
    const Eigen::LLT<MatrixXd> llt = checked_llt(prec, "gibbs_re (beta, z) conditional");
    const VectorXd mean = llt.solve(tau * dty);
    coef = mean + llt.matrixU().solve(standard_normal(d, rng));

    const VectorXd resid = data.y - design * coef;
    tau = sample_gamma(priors.alpha_tau + 0.5 * static_cast<double>(n), priors.beta_tau + 0.5 * resid.squaredNorm(),
                       rng);
    nu = sample_gamma(priors.alpha_nu + 0.5 * k, priors.beta_nu + 0.5 * coef.tail(k).squaredNorm(), rng);

    if (keep(opts, iter)) {
      draws(row, 0) = coef(0);
      draws(row, 1) = coef(1);
      draws(row, 2) = tau;
      draws(row, 3) = std::log(tau);
      draws(row, 4) = nu;
      draws(row, 5) = std::log(nu);
      draws.row(row).tail(k) = coef.tail(k).transpose();
      ++row;
    }
  }
  ChainSummary out = summarize_chain(std::move(names), std::move(draws), opts.seed, opts.burnin);
  out.num_draws = opts.draws;
  return out;
}

// ---------------------------------------------------------------- mixture

namespace {

GmmGibbsStart quantile_start(const MatrixXd& x, int k) {
  const Index n = x.rows();
  const int p = static_cast<int>(x.cols());
  const VectorXd mean = x.colwise().mean();
  const MatrixXd centred = x.rowwise() - mean.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centred.transpose() * centred / static_cast<double>(n));
  const VectorXd score = centred * eig.eigenvectors().col(p - 1);
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return score(a) < score(b); });
  GmmGibbsStart start;
  start.pi = VectorXd::Constant(k, 1.0 / k);
  for (int c = 0; c < k; ++c) {
    const Index lo = n * c / k, hi = n * (c + 1) / k;
    MatrixXd block(hi - lo, p);
    for (Index i = lo; i < hi; ++i) block.row(i - lo) = x.row(order[i]);
    const VectorXd mu = block.colwise().mean();
    const MatrixXd cb = block.rowwise() - mu.transpose();
    MatrixXd cov = cb.transpose() * cb / std::max<double>(1.0, static_cast<double>(hi - lo - 1));
    cov += 1e-6 * MatrixXd::Identity(p, p);
    start.means.push_back(mu);
    start.precisions.push_back(checked_llt(cov, "gibbs_gmm start").solve(MatrixXd::Identity(p, p)));
  }
  return start;
}

// Smallest total squared distance between the draw's means and the reference,
// over all relabelings; returns true when the identity labeling is not optimal.
bool relabeled(const std::vector<VectorXd>& mu, const std::vector<VectorXd>& ref) {
  const int k = static_cast<int>(mu.size());
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  auto cost = [&](const std::vector<int>& pm) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += (mu[pm[c]] - ref[c]).squaredNorm();
    return s;
  };
  const double identity = cost(perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    if (cost(perm) < identity) return true;
  }
  return false;
}

}  // namespace

ChainSummary gibbs_gmm(const GmmDataset& data, const GmmPriors& priors, const SamplerOptions& opts,
                       const GmmSamplerOptions& gmm_opts) {
  data.validate();
  priors.validate();
  opts.validate();
  const int k = gmm_opts.k;
  const int p = data.dim();
  const Index n = data.size();
  if (k < 1 || k > 8) throw ConfigError("gibbs_gmm: K must be in [1, 8]");
  const double a = gmm_opts.mean_prior_a.value_or(priors.mu_precision);
  if (!(a > 0.0)) throw ConfigError("gibbs_gmm: mean prior scale must be positive");
  const MatrixXd& x = data.x;

  GmmGibbsStart state = gmm_opts.start ? *gmm_opts.start : quantile_start(x, k);
  if (static_cast<int>(state.means.size()) != k || static_cast<int>(state.precisions.size()) != k ||
      state.pi.size() != k) {
    throw DimensionMismatch("gibbs_gmm: start does not have K components");
  }
  const std::vector<VectorXd> reference = state.means;
  const MatrixXd w0_inv = priors.wishart_inverse_scale * MatrixXd::Identity(p, p);

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif;

  std::vector<std::string> names;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < p; ++i) names.push_back("mu[" + std::to_string(c) + "][" + std::to_string(i) + "]");
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j)
        names.push_back("lambda[" + std::to_string(c) + "][" + std::to_string(i) + "," + std::to_string(j) + "]");
  for (int c = 0; c < k; ++c) names.push_back("log_pi[" + std::to_string(c) + "]");
  MatrixXd draws(kept_count(opts), static_cast<Index>(names.size()));
  Index row = 0;
  bool switched = false;

  std::vector<int> labels(n, 0);
  VectorXd logw(k);
  std::vector<MatrixXd> chol_prec(k);
  VectorXd log_norm(k);

  for (Index iter = 0; iter < opts.draws; ++iter) {
    // z | mu, Lambda, pi
    for (int c = 0; c < k; ++c) {
      const Eigen::LLT<MatrixXd> llt = checked_llt(state.precisions[c], "gibbs_gmm precision");
      chol_prec[c] = llt.matrixU();  // Lambda = U'U
      log_norm(c) = std::log(state.pi(c)) + llt.matrixLLT().diagonal().array().log().sum();
    }
    for (Index i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) {
        const VectorXd r = chol_prec[c] * (x.row(i).transpose() - state.means[c]);
        logw(c) = log_norm(c) - 0.5 * r.squaredNorm();
      }
      const double mx = logw.maxCoeff();
      const VectorXd w = (logw.array() - mx).exp();
      double u = unif(rng) * w.sum();
      int c = 0;
      while (c < k - 1 && u > w(c)) u -= w(c++);
      labels[i] = c;
    }

    // (mu_k, Lambda_k) | z, then pi | z
    VectorXd counts = VectorXd::Zero(k);
    std::vector<VectorXd> sums(k, VectorXd::Zero(p));
    for (Index i = 0; i < n; ++i) {
      counts(labels[i]) += 1.0;
      sums[labels[i]] += x.row(i).transpose();
    }
    std::vector<MatrixXd> scatter(k, MatrixXd::Zero(p, p));
    std::vector<VectorXd> xbar(k);
    for (int c = 0; c < k; ++c) xbar[c] = counts(c) > 0 ? VectorXd(sums[c] / counts(c)) : VectorXd::Zero(p);
    for (Index i = 0; i < n; ++i) {
      const VectorXd r = x.row(i).transpose() - xbar[labels[i]];
      scatter[labels[i]].noalias() += r * r.transpose();
    }
    for (int c = 0; c < k; ++c) {
      const double nk = counts(c);
      const MatrixXd s_inv = w0_inv + scatter[c] + (a * nk / (a + nk)) * xbar[c] * xbar[c].transpose();
      const MatrixXd scale = checked_llt(s_inv, "gibbs_gmm Wishart scale").solve(MatrixXd::Identity(p, p));
      state.precisions[c] = sample_wishart(0.5 * (scale + scale.transpose()), priors.wishart_dof + nk, rng);
      const Eigen::LLT<MatrixXd> llt = checked_llt((a + nk) * state.precisions[c], "gibbs_gmm mean conditional");
      state.means[c] = nk * xbar[c] / (a + nk) + llt.matrixU().solve(standard_normal(p, rng));
    }
    state.pi = sample_dirichlet(counts.array() + priors.dirichlet_alpha, rng);

    if (keep(opts, iter)) {
      if (k > 1 && relabeled(state.means, reference)) switched = true;
      Index col = 0;
      for (int c = 0; c < k; ++c)
        for (int i = 0; i < p; ++i) draws(row, col++) = state.means[c](i);
      for (int c = 0; c < k; ++c)
        for (int i = 0; i < p; ++i)
          for (int j = i; j < p; ++j) draws(row, col++) = state.precisions[c](i, j);
      for (int c = 0; c < k; ++c) draws(row, col++) = std::log(state.pi(c));
      ++row;
    }
  }
  ChainSummary out = summarize_chain(std::move(names), std::move(draws), opts.seed, opts.burnin);
  out.num_draws = opts.draws;
  out.label_switch = switched;
  if (switched) out.warnings.push_back("LabelSwitch: component means relabeled during sampling");
  return out;
}

}  // namespace lrvb::oracles
