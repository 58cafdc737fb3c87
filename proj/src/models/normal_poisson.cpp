#include "lrvb/models/normal_poisson.hpp"

#include "lrvb/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lrvb::models {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr int kMaxInnerSteps = 100;

double z_variance(double mean, double second_moment) {
  const double v = second_moment - mean * mean;
  if (!(v >= 0.0)) throw DomainError("normal-Poisson: negative variance for z");
  return v;
}

}  // namespace

void NpDataset::validate() const {
  if (y.size() < 1) throw ConfigError("normal-Poisson dataset is empty");
  if (x.size() != y.size()) throw DimensionMismatch("normal-Poisson dataset: y and x lengths differ");
  for (Index n = 0; n < y.size(); ++n) {
    if (!(y(n) >= 0.0) || y(n) != std::floor(y(n))) throw ConfigError("normal-Poisson: y must be nonnegative counts");
    if (!std::isfinite(x(n))) throw ConfigError("normal-Poisson: x must be finite");
  }
}

void NpPriors::validate() const {
  if (!(sigma_beta2 > 0.0) || !(alpha_tau > 0.0) || !(beta_tau > 0.0)) {
    throw ConfigError("normal-Poisson priors must be positive");
  }
}

NpDataset np_simulate(const NpSimConfig& config, std::uint64_t seed) {
  if (config.n < 1) throw ConfigError("np_simulate: N must be >= 1");
  if (!(config.tau > 0.0)) throw ConfigError("np_simulate: tau must be positive");
  if (!(config.x_sd >= 0.0)) throw ConfigError("np_simulate: x_sd must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  NpDataset d;
  d.x.resize(config.n);
  d.y.resize(config.n);
  const double z_sd = 1.0 / std::sqrt(config.tau);
  for (int n = 0; n < config.n; ++n) {
    d.x(n) = config.x_mean + config.x_sd * nd(rng);
    const double z = config.beta * d.x(n) + z_sd * nd(rng);
    std::poisson_distribution<long long> pois(std::exp(z));
    d.y(n) = static_cast<double>(pois(rng));
  }
  return d;
}

double np_expected_exp_z(double mean, double second_moment) {
  return std::exp(mean + 0.5 * z_variance(mean, second_moment));
}

Eigen::Vector2d np_expected_exp_z_grad(double mean, double second_moment) {
  const double e = np_expected_exp_z(mean, second_moment);
  return {e * (1.0 - mean), 0.5 * e};
}

NpZUpdate np_solve_z(double y, double x, double e_tau, double e_beta, double init_mean, double init_var,
                     double tol) {
  const double lin = x * e_tau * e_beta + y;
  auto objective = [&](double a, double s) {
    const double v = std::exp(s);
    return -0.5 * e_tau * (a * a + v) + lin * a - std::exp(a + 0.5 * v) + 0.5 * s;
  };
  double a = std::isfinite(init_mean) ? init_mean : std::log(y + 0.5);
  double s = (init_var > 0.0 && std::isfinite(init_var)) ? std::log(init_var) : -std::log(y + 1.0);

  NpZUpdate out;
  for (int it = 0; it <= kMaxInnerSteps; ++it) {
    const double v = std::exp(s);
    const double e = std::exp(a + 0.5 * v);
    const double ga = -e_tau * a + lin - e;
    const double gs = 0.5 * (1.0 - v * (e_tau + e));
    // Each component is measured against the size of the terms it sums, so the
    // tolerance stays attainable in floating point when y or tau are large.
    const double scale_a = std::max({1.0, std::abs(lin), e_tau * std::abs(a), e});
    const double scale_s = std::max(1.0, v * (e_tau + e));
    out.gradient_norm = std::max(std::abs(ga) / scale_a, std::abs(gs) / scale_s);
    out.iterations = it;
    if (out.gradient_norm <= tol) {
      out.mean = a;
      out.variance = v;
      return out;
    }
    if (it == kMaxInnerSteps) break;

    const double haa = -e_tau - e;
    const double has = -0.5 * v * e;
    const double hss = -0.5 * e_tau * v - 0.5 * v * e - 0.25 * v * v * e;
    const double det = haa * hss - has * has;
    double da = ga, ds = gs;
    bool newton = false;
    if (haa < 0.0 && det > 0.0) {
      da = -(hss * ga - has * gs) / det;
      ds = -(-has * ga + haa * gs) / det;
      newton = true;
    }
    const double biggest = std::max(std::abs(da), std::abs(ds));
    if (biggest > 2.0) {
      da *= 2.0 / biggest;
      ds *= 2.0 / biggest;
    }

    const double f0 = objective(a, s);
    const double slope = ga * da + gs * ds;
    // Close to the optimum the predicted gain is below rounding noise; take the Newton step as is.
    if (newton && biggest <= 2.0 && 0.5 * slope <= 1e-12 * (1.0 + std::abs(f0))) {
      a += da;
      s += ds;
      continue;
    }
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      const double fn = objective(a + t * da, s + t * ds);
      if (std::isfinite(fn) && fn >= f0 + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Golden-section search along the direction on [0, 1].
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double lo = 0.0, hi = 1.0;
      double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
      auto g = [&](double tt) {
        const double val = objective(a + tt * da, s + tt * ds);
        return std::isfinite(val) ? val : -INFINITY;
      };
      double fc = g(c), fd = g(d);
      for (int k = 0; k < 80; ++k) {
        if (fc > fd) {
          hi = d;
          d = c;
          fd = fc;
          c = hi - phi * (hi - lo);
          fc = g(c);
        } else {
          lo = c;
          c = d;
          fc = fd;
          d = lo + phi * (hi - lo);
          fd = g(d);
        }
      }
      t = 0.5 * (lo + hi);
      if (!(g(t) >= f0)) t = 0.0;
    }
    a += t * da;
    s += t * ds;
  }
  throw NoConvergence("InnerNoConvergence: z update did not reach gradient norm " + std::to_string(tol) +
                      " in " + std::to_string(kMaxInnerSteps) + " Newton steps (last " +
                      std::to_string(out.gradient_norm) + ")");
}

NpProblem::NpProblem(NpDataset data, NpPriors priors) : data_(std::move(data)), priors_(priors) {
  data_.validate();
  priors_.validate();
  layout_.add("beta", expfam::FactorFamily::gaussian_uv(), Partition::Alpha);
  layout_.add("tau", expfam::FactorFamily::gamma(), Partition::Alpha);
  for (Index n = 0; n < data_.size(); ++n) {
    layout_.add("z[" + std::to_string(n) + "]", expfam::FactorFamily::gaussian_uv(), Partition::Z);
  }
  sum_x2_ = data_.x.squaredNorm();
}

double NpProblem::expected_log_posterior(const VectorXd& m) const {
  if (m.size() != layout_.size()) throw DimensionMismatch("NpProblem: m has wrong size");
  const double eb = m(kBeta), eb2 = m(kBeta2), et = m(kTau), elt = m(kLogTau);
  const Index n_obs = data_.size();
  double out = 0.0;
  for (Index n = 0; n < n_obs; ++n) {
    const double ez = m(z_mean_index(n)), ez2 = m(z_mean_index(n) + 1);
    const double x = data_.x(n), y = data_.y(n);
    out += -0.5 * et * (ez2 - 2.0 * x * eb * ez + x * x * eb2) + 0.5 * elt - 0.5 * kLog2Pi;
    // Analytic continuation of E[exp z]; admissibility is enforced by the entropy term of the ELBO.
    out += y * ez - std::exp(ez + 0.5 * (ez2 - ez * ez)) - std::lgamma(y + 1.0);
  }
  out += -0.5 * eb2 / priors_.sigma_beta2 - 0.5 * std::log(2.0 * M_PI * priors_.sigma_beta2);
  out += (priors_.alpha_tau - 1.0) * elt - priors_.beta_tau * et + priors_.alpha_tau * std::log(priors_.beta_tau) -
         std::lgamma(priors_.alpha_tau);
  return out;
}

HessianMatrix NpProblem::hessian(const VectorXd& m) const {
  if (m.size() != layout_.size()) throw DimensionMismatch("NpProblem: m has wrong size");
  HessianMatrix h = HessianMatrix::zeros(layout_, ZzStructure::Blocks);
  const double eb = m(kBeta), et = m(kTau);
  double sum_x_ez = 0.0;
  for (Index n = 0; n < data_.size(); ++n) {
    const double x = data_.x(n);
    const double ez = m(z_mean_index(n)), ez2 = m(z_mean_index(n) + 1);
    sum_x_ez += x * ez;
    const Index c = 2 * n;  // column within the z partition
    h.alpha_z(kBeta, c) = x * et;
    h.alpha_z(kTau, c) = x * eb;
    h.alpha_z(kTau, c + 1) = -0.5;
    const double e = std::exp(ez + 0.5 * (ez2 - ez * ez));
    const double w = 1.0 - ez;
    MatrixXd& b = h.zz_blocks[n];
    b(0, 0) = -e * (w * w - 1.0);
    b(0, 1) = b(1, 0) = -0.5 * e * w;
    b(1, 1) = -0.25 * e;
  }
  h.alpha(kBeta, kTau) = h.alpha(kTau, kBeta) = sum_x_ez;
  h.alpha(kBeta2, kTau) = h.alpha(kTau, kBeta2) = -0.5 * sum_x2_;
  return h;
}

expfam::FactorState NpProblem::update_beta(const VectorXd& m) const {
  const double et = m(kTau);
  double sum_x_ez = 0.0;
  for (Index n = 0; n < data_.size(); ++n) sum_x_ez += data_.x(n) * m(z_mean_index(n));
  const double prec = et * sum_x2_ + 1.0 / priors_.sigma_beta2;
  return expfam::FactorState::gaussian_uv(et * sum_x_ez / prec, 1.0 / prec);
}

expfam::FactorState NpProblem::update_tau(const VectorXd& m) const {
  const double eb = m(kBeta), eb2 = m(kBeta2);
  double ss = 0.0;
  for (Index n = 0; n < data_.size(); ++n) {
    const double x = data_.x(n);
    ss += m(z_mean_index(n) + 1) - 2.0 * x * eb * m(z_mean_index(n)) + x * x * eb2;
  }
  const double shape = priors_.alpha_tau + 0.5 * static_cast<double>(data_.size());
  const double rate = priors_.beta_tau + 0.5 * ss;
  if (!(rate > 0.0)) throw DomainError("normal-Poisson: tau update has nonpositive rate");
  return expfam::FactorState::gamma(shape, rate);
}

expfam::FactorState NpProblem::update_z(const VectorXd& m, Index n) const {
  const Index i = z_mean_index(n);
  const double ez = m(i);
  const double v = m(i + 1) - ez * ez;
  const NpZUpdate u = np_solve_z(data_.y(n), data_.x(n), m(kTau), m(kBeta), ez, v);
  return expfam::FactorState::gaussian_uv(u.mean, u.variance);
}

expfam::FactorState NpProblem::update_factor(std::size_t j, const VectorXd& m) const {
  if (j == 0) return update_beta(m);
  if (j == 1) return update_tau(m);
  if (j >= layout_.num_blocks()) throw LayoutMismatch("NpProblem: factor index out of range");
  return update_z(m, static_cast<Index>(j) - 2);
}

std::vector<expfam::FactorState> NpProblem::initial_factors() const {
  const Index n_obs = data_.size();
  VectorXd z(n_obs), zv(n_obs);
  for (Index n = 0; n < n_obs; ++n) {
    z(n) = std::log(data_.y(n) + 0.5);
    zv(n) = 1.0 / (data_.y(n) + 1.0);
  }
  const double beta = sum_x2_ > 0.0 ? data_.x.dot(z) / sum_x2_ : 0.0;
  const double resid = ((z - beta * data_.x).array().square() + zv.array()).mean();
  const double shape = priors_.alpha_tau + 0.5 * static_cast<double>(n_obs);
  std::vector<expfam::FactorState> out;
  out.push_back(expfam::FactorState::gaussian_uv(beta, sum_x2_ > 0.0 ? resid / sum_x2_ : 1.0));
  out.push_back(expfam::FactorState::gamma(shape, shape * std::max(resid, 1e-6)));
  for (Index n = 0; n < n_obs; ++n) out.push_back(expfam::FactorState::gaussian_uv(z(n), zv(n)));
  return out;
}

NpLrvb np_lrvb(const NpDataset& data, const NpPriors& priors, const FitOptions& opts) {
  const NpProblem problem(data, priors);
  NpLrvb out;
  out.fit = coordinate_ascent(problem, problem.initial_factors(), opts);
  const BlockDiagonal v = assemble_V(out.fit.factors, problem.layout());
  LrvbOptions lopts;
  lopts.cross_covariance = true;
  out.lrvb = lrvb_schur(v, problem.hessian(out.fit.m), problem.layout(), BlockZSolver{}, lopts);
  out.beta = summarize("beta", out.fit.m, out.lrvb, NpProblem::kBeta, result_position(out.lrvb, NpProblem::kBeta));
  out.tau = summarize("tau", out.fit.m, out.lrvb, NpProblem::kTau, result_position(out.lrvb, NpProblem::kTau));
  out.log_tau = summarize("log_tau", out.fit.m, out.lrvb, NpProblem::kLogTau,
                          result_position(out.lrvb, NpProblem::kLogTau));
  return out;
}

VectorXd np_exp_z_covariance(const NpLrvb& result, Index n) {
  if (!result.lrvb.cross_z_alpha) throw LayoutMismatch("np_exp_z_covariance: result has no cross covariance");
  const MatrixXd& cross = *result.lrvb.cross_z_alpha;
  if (n < 0 || 2 * n + 1 >= cross.rows()) throw DimensionMismatch("np_exp_z_covariance: n out of range");
  const Index i = NpProblem::z_mean_index(n);
  const Eigen::Vector2d g = np_expected_exp_z_grad(result.fit.m(i), result.fit.m(i + 1));
  return cross.middleRows(2 * n, 2).transpose() * g;
}

}  // namespace lrvb::models
