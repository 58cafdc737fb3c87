#include "lrvb/oracles/quadrature.hpp"

#include "lrvb/error.hpp"

#include <cmath>
#include <limits>

namespace lrvb::oracles {

using Eigen::Index;

namespace {

// Raw trapezoid sums of w, w f, w f f' with weights normalised by exp(-shift).
struct Moments {
  double z = 0.0;
  VectorXd s1;
  MatrixXd s2;
};

Moments trapezoid(const QuadratureSpec& spec, int intervals, double shift) {
  const Index d = spec.lower.size();
  const VectorXd h = (spec.upper - spec.lower) / intervals;
  const Index pts = intervals + 1;
  Index total = 1;
  for (Index i = 0; i < d; ++i) total *= pts;
  Moments out;
  std::vector<Index> idx(d, 0);
  VectorXd x(d);
  for (Index flat = 0; flat < total; ++flat) {
    Index rem = flat;
    double w = 1.0;
    for (Index i = 0; i < d; ++i) {
      idx[i] = rem % pts;
      rem /= pts;
      x(i) = spec.lower(i) + idx[i] * h(i);
      if (idx[i] == 0 || idx[i] == pts - 1) w *= 0.5;
    }
    const double lp = spec.log_density(x);
    if (!std::isfinite(lp)) continue;
    const double p = w * std::exp(lp - shift);
    const VectorXd f = spec.functionals(x);
    if (out.s1.size() == 0) {
      out.s1 = VectorXd::Zero(f.size());
      out.s2 = MatrixXd::Zero(f.size(), f.size());
    }
    out.z += p;
    out.s1 += p * f;
    out.s2.noalias() += p * f * f.transpose();
  }
  const double cell = h.prod();
  out.z *= cell;
  out.s1 *= cell;
  out.s2 *= cell;
  return out;
}

struct Estimate {
  VectorXd mean;
  MatrixXd second;
  double z = 0.0;
};

Estimate richardson(const Moments& coarse, const Moments& fine) {
  // Trapezoid error is O(h^2): combine (4 T(h/2) - T(h)) / 3 on each raw integral.
  const double z = (4.0 * fine.z - coarse.z) / 3.0;
  const VectorXd s1 = (4.0 * fine.s1 - coarse.s1) / 3.0;
  const MatrixXd s2 = (4.0 * fine.s2 - coarse.s2) / 3.0;
  return {s1 / z, s2 / z, z};
}

double max_rel_change(const Estimate& a, const Estimate& b) {
  const double scale_m = std::max(1.0, b.mean.cwiseAbs().maxCoeff());
  const double scale_s = std::max(1.0, b.second.cwiseAbs().maxCoeff());
  return std::max((a.mean - b.mean).cwiseAbs().maxCoeff() / scale_m,
                  (a.second - b.second).cwiseAbs().maxCoeff() / scale_s);
}

}  // namespace

QuadratureResult quadrature_posterior(const QuadratureSpec& spec) {
  const Index d = spec.lower.size();
  if (d < 1 || spec.upper.size() != d) throw DimensionMismatch("quadrature_posterior: bounds");
  if (d > 4) throw DimensionTooLarge("quadrature_posterior: dimension " + std::to_string(d) + " exceeds 4");
  if ((spec.upper.array() <= spec.lower.array()).any()) throw ConfigError("quadrature_posterior: empty box");
  if (spec.initial_intervals < 2) throw ConfigError("quadrature_posterior: need at least 2 intervals");

  // Shift the log density by its value at the box centre to keep weights in range.
  const VectorXd centre = 0.5 * (spec.lower + spec.upper);
  double shift = spec.log_density(centre);
  if (!std::isfinite(shift)) shift = 0.0;

  int intervals = spec.initial_intervals;
  Moments coarse = trapezoid(spec, intervals, shift);
  Moments fine = trapezoid(spec, 2 * intervals, shift);
  Estimate prev = richardson(coarse, fine);
  int refinements = 1;
  while (true) {
    intervals *= 2;
    if (2 * intervals > spec.max_intervals) {
      throw NoConvergence("quadrature_posterior: no convergence at " + std::to_string(intervals) + " intervals");
    }
    coarse = std::move(fine);
    fine = trapezoid(spec, 2 * intervals, shift);
    const Estimate next = richardson(coarse, fine);
    ++refinements;
    if (!(next.z > 0.0)) throw NumericalError("quadrature_posterior: zero mass on the grid");
    if (max_rel_change(prev, next) < spec.rel_tol) {
      QuadratureResult r;
      r.mean = next.mean;
      r.cov = next.second - next.mean * next.mean.transpose();
      r.cov = 0.5 * (r.cov + r.cov.transpose());
      r.log_normaliser = std::log(next.z) + shift;
      r.intervals = 2 * intervals;
      r.refinements = refinements;
      return r;
    }
    prev = next;
  }
}

}  // namespace lrvb::oracles

namespace lrvb::oracles {

namespace {

VectorXd fd_gradient(const ScalarFunction& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  VectorXd y = x;
  for (Index i = 0; i < x.size(); ++i) {
    y(i) = x(i) + h;
    const double fp = f(y);
    y(i) = x(i) - h;
    const double fm = f(y);
    y(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

QuadratureResult np_quadrature(const models::NpDataset& data, const models::NpPriors& priors, double width,
                               double rel_tol) {
  data.validate();
  priors.validate();
  const Index n = data.size();
  if (n > 2) throw DimensionTooLarge("np_quadrature: at most 2 observations");

  // beta is conditionally Gaussian given (tau, z), so it is integrated out in closed form and the grid
  // runs over (u = log tau, z_1..z_N). The Gamma prior on tau carries the Jacobian e^u.
  const double sxx = data.x.squaredNorm();
  const auto beta_prec = [&](double tau) { return 1.0 / priors.sigma_beta2 + tau * sxx; };
  const ScalarFunction log_density = [&](const VectorXd& v) {
    const double u = v(0), tau = std::exp(u);
    const VectorXd z = v.tail(n);
    const double prec = beta_prec(tau), lin = tau * data.x.dot(z);
    double out = priors.alpha_tau * u - priors.beta_tau * tau + 0.5 * n * u - 0.5 * std::log(prec) -
                 0.5 * tau * z.squaredNorm() + 0.5 * lin * lin / prec;
    for (Index i = 0; i < n; ++i) out += data.y(i) * z(i) - std::exp(z(i));
    return out;
  };
  const Index dim = 1 + n;

  // Mode by damped Newton on finite-difference derivatives.
  VectorXd mode(dim);
  mode(0) = 0.0;
  for (Index i = 0; i < n; ++i) mode(1 + i) = std::log(data.y(i) + 0.5);
  MatrixXd hess;
  for (int it = 0; it < 200; ++it) {
    const VectorXd g = fd_gradient(log_density, mode, 1e-6);
    hess = fd_hessian(log_density, mode, 1e-4);
    Eigen::LDLT<MatrixXd> ldlt(-hess);
    VectorXd dir = (ldlt.info() == Eigen::Success && ldlt.isPositive()) ? VectorXd(ldlt.solve(g)) : g;
    double t = 1.0;
    const double f0 = log_density(mode);
    while (t > 1e-10 && !(log_density(mode + t * dir) >= f0)) t *= 0.5;
    mode += t * dir;
    if (g.cwiseAbs().maxCoeff() < 1e-9 || (t * dir).cwiseAbs().maxCoeff() < 1e-12) break;
  }
  hess = fd_hessian(log_density, mode, 1e-4);
  Eigen::LLT<MatrixXd> llt(-hess);
  if (llt.info() != Eigen::Success) throw NumericalError("np_quadrature: posterior mode is not a maximum");
  const VectorXd sd = llt.solve(MatrixXd::Identity(dim, dim)).diagonal().cwiseSqrt();

  QuadratureSpec spec;
  spec.log_density = log_density;
  spec.lower = mode - width * sd;
  spec.upper = mode + width * sd;
  // The lower tail in log tau decays only like exp((alpha_tau + N/2) u).
  spec.lower(0) = std::min(spec.lower(0), mode(0) - 40.0 / (priors.alpha_tau + 0.5 * n));
  spec.rel_tol = rel_tol;
  spec.initial_intervals = 16;
  spec.max_intervals = n == 2 ? 256 : 2048;
  // Functionals: E[beta | tau, z], tau, log tau, z, exp z, Var[beta | tau, z].
  spec.functionals = [&, n](const VectorXd& v) {
    const double tau = std::exp(v(0)), prec = beta_prec(tau);
    VectorXd f(4 + 2 * n);
    f(0) = tau * data.x.dot(v.tail(n)) / prec;
    f(1) = tau;
    f(2) = v(0);
    for (Index i = 0; i < n; ++i) {
      f(3 + i) = v(1 + i);
      f(3 + n + i) = std::exp(v(1 + i));
    }
    f(3 + 2 * n) = 1.0 / prec;
    return f;
  };
  QuadratureResult r = quadrature_posterior(spec);
  // Law of total variance for beta; covariances of beta with the other functionals need no correction.
  const Index k = 3 + 2 * n;
  r.cov(0, 0) += r.mean(k);
  r.mean.conservativeResize(k);
  r.cov.conservativeResize(k, k);
  return r;
}

}  // namespace lrvb::oracles
