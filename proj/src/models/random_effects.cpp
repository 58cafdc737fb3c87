#include "lrvb/models/random_effects.hpp"

#include "lrvb/error.hpp"

#include <cmath>
#include <random>

namespace lrvb::models {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::Matrix2d beta_outer(const VectorXd& m) {
  Eigen::Matrix2d out;
  out << m(2), m(3), m(3), m(4);
  return out;
}

double gamma_prior_term(double shape, double rate, double e, double elog) {
  return (shape - 1.0) * elog - rate * e + shape * std::log(rate) - std::lgamma(shape);
}

}  // namespace

void ReDataset::validate() const {
  const Index n = y.size();
  if (n < 1) throw ConfigError("random-effects dataset is empty");
  if (x.rows() != n || x.cols() != 2) throw DimensionMismatch("random-effects dataset: x must be N x 2");
  if (r.size() != n || static_cast<Index>(k.size()) != n) throw DimensionMismatch("random-effects dataset lengths");
  if (num_groups < 1) throw ConfigError("random-effects dataset needs at least one group");
  std::vector<int> count(num_groups, 0);
  for (int g : k) {
    if (g < 0 || g >= num_groups) throw ConfigError("random-effects dataset: group index out of range");
    ++count[g];
  }
  for (int c : count)
    if (c == 0) throw ConfigError("random-effects dataset: every group needs at least one observation");
  if (!y.allFinite() || !x.allFinite() || !r.allFinite()) throw ConfigError("random-effects dataset: non-finite value");
}

void RePriors::validate() const {
  if (sigma_beta.rows() != 2 || sigma_beta.cols() != 2) throw ConfigError("random-effects: sigma_beta must be 2x2");
  if (Eigen::LLT<MatrixXd>(sigma_beta).info() != Eigen::Success) {
    throw ConfigError("random-effects: sigma_beta must be positive definite");
  }
  if (!(alpha_tau > 0.0) || !(beta_tau > 0.0) || !(alpha_nu > 0.0) || !(beta_nu > 0.0)) {
    throw ConfigError("random-effects: gamma hyperparameters must be positive");
  }
}

ReDataset re_simulate(const ReSimConfig& config, std::uint64_t seed) {
  if (config.n < 1 || config.k < 1 || config.k > config.n) throw ConfigError("re_simulate: need 1 <= K <= N");
  if (!(config.tau > 0.0) || !(config.nu > 0.0)) throw ConfigError("re_simulate: tau and nu must be positive");
  if (!(config.x_sd >= 0.0) || !(config.r_noise_sd >= 0.0)) throw ConfigError("re_simulate: negative scale");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  ReDataset d;
  d.num_groups = config.k;
  d.y.resize(config.n);
  d.x.resize(config.n, 2);
  d.r.resize(config.n);
  d.k.resize(config.n);
  VectorXd z(config.k);
  for (int g = 0; g < config.k; ++g) z(g) = nd(rng) / std::sqrt(config.nu);
  const double noise_sd = 1.0 / std::sqrt(config.tau);
  for (int n = 0; n < config.n; ++n) {
    d.x(n, 0) = config.x_sd * nd(rng);
    d.x(n, 1) = config.x_sd * nd(rng);
    d.r(n) = config.r_x1_weight * d.x(n, 0) + config.r_noise_sd * nd(rng);
    d.k[n] = n % config.k;
    d.y(n) = d.x.row(n).dot(config.beta) + d.r(n) * z(d.k[n]) + noise_sd * nd(rng);
  }
  return d;
}

ReProblem::ReProblem(ReDataset data, RePriors priors) : data_(std::move(data)), priors_(std::move(priors)) {
  data_.validate();
  priors_.validate();
  const Eigen::LLT<MatrixXd> llt(priors_.sigma_beta);
  prior_precision_ = llt.solve(MatrixXd::Identity(2, 2));
  prior_log_det_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  layout_.add("beta", expfam::FactorFamily::gaussian_mv(2), Partition::Alpha);
  layout_.add("tau", expfam::FactorFamily::gamma(), Partition::Alpha);
  layout_.add("nu", expfam::FactorFamily::gamma(), Partition::Alpha);
  groups_.resize(data_.num_groups);
  for (Index n = 0; n < data_.size(); ++n) groups_[data_.k[n]].push_back(n);
  for (int g = 0; g < data_.num_groups; ++g) {
    layout_.add("z[" + std::to_string(g) + "]", expfam::FactorFamily::gaussian_uv(), Partition::Z);
  }
}

double ReProblem::expected_sq_residual(const VectorXd& m, Index n) const {
  const Eigen::Vector2d eb = m.segment<2>(kBeta);
  const Eigen::Matrix2d ebb = beta_outer(m);
  const Eigen::Vector2d x = data_.x.row(n).transpose();
  const double y = data_.y(n), r = data_.r(n);
  const Index zi = z_mean_index(data_.k[n]);
  const double ez = m(zi), ez2 = m(zi + 1);
  return y * y - 2.0 * y * x.dot(eb) - 2.0 * y * r * ez + x.dot(ebb * x) + r * r * ez2 + 2.0 * r * ez * x.dot(eb);
}

double ReProblem::expected_log_posterior(const VectorXd& m) const {
  if (m.size() != layout_.size()) throw DimensionMismatch("ReProblem: m has wrong size");
  const Eigen::Matrix2d ebb = beta_outer(m);
  const double et = m(kTau), elt = m(kLogTau), en = m(kNu), eln = m(kLogNu);
  double out = 0.0;
  for (Index n = 0; n < data_.size(); ++n) {
    out += 0.5 * elt - 0.5 * kLog2Pi - 0.5 * et * expected_sq_residual(m, n);
  }
  for (int g = 0; g < data_.num_groups; ++g) {
    const Index zi = z_mean_index(g);
    out += 0.5 * eln - 0.5 * kLog2Pi - 0.5 * en * m(zi + 1);
  }
  out += -0.5 * (prior_precision_.cwiseProduct(ebb)).sum() - kLog2Pi - 0.5 * prior_log_det_;
  out += gamma_prior_term(priors_.alpha_tau, priors_.beta_tau, et, elt);
  out += gamma_prior_term(priors_.alpha_nu, priors_.beta_nu, en, eln);
  return out;
}

HessianMatrix ReProblem::hessian(const VectorXd& m) const {
  if (m.size() != layout_.size()) throw DimensionMismatch("ReProblem: m has wrong size");
  HessianMatrix h = HessianMatrix::zeros(layout_, ZzStructure::Zero);
  const Eigen::Vector2d eb = m.segment<2>(kBeta);
  const double et = m(kTau);
  Eigen::Vector2d tau_beta = Eigen::Vector2d::Zero();
  Eigen::Matrix2d xx = Eigen::Matrix2d::Zero();
  for (int g = 0; g < data_.num_groups; ++g) {
    const Index zi = z_mean_index(g);
    const Index col = 2 * static_cast<Index>(g);
    const double ez = m(zi);
    double tau_z = 0.0, tau_z2 = 0.0;
    Eigen::Vector2d beta_z = Eigen::Vector2d::Zero();
    for (Index n : groups_[g]) {
      const Eigen::Vector2d x = data_.x.row(n).transpose();
      const double y = data_.y(n), r = data_.r(n);
      tau_beta += (y - r * ez) * x;
      xx += x * x.transpose();
      tau_z += y * r - r * x.dot(eb);
      tau_z2 += -0.5 * r * r;
      beta_z += -et * r * x;
    }
    h.alpha_z(kTau, col) = tau_z;
    h.alpha_z(kTau, col + 1) = tau_z2;
    h.alpha_z(0, col) = beta_z(0);
    h.alpha_z(1, col) = beta_z(1);
    h.alpha_z(kNu, col + 1) = -0.5;
  }
  for (int a = 0; a < 2; ++a) h.alpha(kTau, a) = h.alpha(a, kTau) = tau_beta(a);
  h.alpha(kTau, kBetaOuter) = h.alpha(kBetaOuter, kTau) = -0.5 * xx(0, 0);
  h.alpha(kTau, kBetaOuter + 1) = h.alpha(kBetaOuter + 1, kTau) = -xx(0, 1);
  h.alpha(kTau, kBetaOuter + 2) = h.alpha(kBetaOuter + 2, kTau) = -0.5 * xx(1, 1);
  return h;
}

expfam::FactorState ReProblem::update_beta(const VectorXd& m) const {
  const double et = m(kTau);
  Eigen::Matrix2d prec = prior_precision_;
  Eigen::Vector2d lin = Eigen::Vector2d::Zero();
  for (Index n = 0; n < data_.size(); ++n) {
    const Eigen::Vector2d x = data_.x.row(n).transpose();
    prec += et * x * x.transpose();
    lin += et * (data_.y(n) - data_.r(n) * m(z_mean_index(data_.k[n]))) * x;
  }
  const Eigen::Matrix2d cov = prec.inverse();
  return expfam::FactorState::gaussian_mv(cov * lin, 0.5 * (cov + cov.transpose()));
}

expfam::FactorState ReProblem::update_tau(const VectorXd& m) const {
  double ss = 0.0;
  for (Index n = 0; n < data_.size(); ++n) ss += expected_sq_residual(m, n);
  const double rate = priors_.beta_tau + 0.5 * ss;
  if (!(rate > 0.0)) throw DomainError("random-effects: tau update has nonpositive rate");
  return expfam::FactorState::gamma(priors_.alpha_tau + 0.5 * static_cast<double>(data_.size()), rate);
}

expfam::FactorState ReProblem::update_nu(const VectorXd& m) const {
  double ss = 0.0;
  for (int g = 0; g < data_.num_groups; ++g) ss += m(z_mean_index(g) + 1);
  const double rate = priors_.beta_nu + 0.5 * ss;
  if (!(rate > 0.0)) throw DomainError("random-effects: nu update has nonpositive rate");
  return expfam::FactorState::gamma(priors_.alpha_nu + 0.5 * data_.num_groups, rate);
}

expfam::FactorState ReProblem::update_z(const VectorXd& m, int k) const {
  const Eigen::Vector2d eb = m.segment<2>(kBeta);
  const double et = m(kTau);
  double prec = m(kNu), lin = 0.0;
  for (Index n : groups_[k]) {
    const double r = data_.r(n);
    prec += et * r * r;
    lin += et * r * (data_.y(n) - data_.x.row(n).dot(eb));
  }
  return expfam::FactorState::gaussian_uv(lin / prec, 1.0 / prec);
}

expfam::FactorState ReProblem::update_factor(std::size_t j, const VectorXd& m) const {
  switch (j) {
    case 0: return update_beta(m);
    case 1: return update_tau(m);
    case 2: return update_nu(m);
    default:
      if (j >= layout_.num_blocks()) throw LayoutMismatch("ReProblem: factor index out of range");
      return update_z(m, static_cast<int>(j) - 3);
  }
}

std::vector<expfam::FactorState> ReProblem::initial_factors() const {
  const MatrixXd& x = data_.x;
  const Eigen::Matrix2d xtx = x.transpose() * x + 1e-8 * Eigen::Matrix2d::Identity();
  const Eigen::Vector2d ols = xtx.ldlt().solve(x.transpose() * data_.y);
  const double resid = std::max((data_.y - x * ols).squaredNorm() / static_cast<double>(data_.size()), 1e-6);
  const double tau_shape = priors_.alpha_tau + 0.5 * static_cast<double>(data_.size());
  const double nu_mean = priors_.alpha_nu / priors_.beta_nu;
  std::vector<expfam::FactorState> out;
  const Eigen::Matrix2d cov = resid * xtx.inverse();
  out.push_back(expfam::FactorState::gaussian_mv(ols, 0.5 * (cov + cov.transpose())));
  out.push_back(expfam::FactorState::gamma(tau_shape, tau_shape * resid));
  out.push_back(expfam::FactorState::gamma(priors_.alpha_nu, priors_.alpha_nu / nu_mean));
  for (int g = 0; g < data_.num_groups; ++g) out.push_back(expfam::FactorState::gaussian_uv(0.0, 1.0 / nu_mean));
  return out;
}

ReLrvb re_lrvb(const ReDataset& data, const RePriors& priors, const FitOptions& opts) {
  const ReProblem problem(data, priors);
  ReLrvb out;
  out.fit = coordinate_ascent(problem, problem.initial_factors(), opts);
  const BlockDiagonal v = assemble_V(out.fit.factors, problem.layout());
  LrvbOptions lopts;
  lopts.cross_covariance = true;
  out.lrvb = lrvb_schur(v, problem.hessian(out.fit.m), problem.layout(), lopts);
  const std::pair<const char*, Index> coords[] = {
      {"beta_1", 0}, {"beta_2", 1}, {"tau", ReProblem::kTau}, {"nu", ReProblem::kNu}};
  for (const auto& [name, c] : coords) {
    out.params.push_back(summarize(name, out.fit.m, out.lrvb, c, result_position(out.lrvb, c)));
  }
  return out;
}

}  // namespace lrvb::models
