#include "lrvb/expfam.hpp"

#include "lrvb/error.hpp"
#include "lrvb/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lrvb::expfam {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_size(const FactorFamily& family, const VectorXd& v, const char* what) {
  if (v.size() != family.num_stats()) {
    throw DimensionMismatch(family.name() + ": " + what + " has size " +
                            std::to_string(v.size()) + ", expected " +
                            std::to_string(family.num_stats()));
  }
}

void require_finite(const FactorFamily& family, const VectorXd& v, const char* what) {
  if (!v.allFinite()) throw DomainError(family.name() + ": non-finite " + what);
}

// Symmetric matrix S from the natural coefficients on vech(X) in -1/2 tr(S X):
// diagonal coefficients are -S_aa/2 and off-diagonal ones -S_ab.
MatrixXd matrix_from_vech_coeffs(const Eigen::Ref<const VectorXd>& c, int p) {
  MatrixXd s(p, p);
  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) {
      const double v = c(vech_index(a, b, p));
      s(a, b) = s(b, a) = (a == b) ? -2.0 * v : -v;
    }
  }
  return s;
}

VectorXd vech_coeffs_from_matrix(const MatrixXd& s) {
  const int p = static_cast<int>(s.rows());
  VectorXd c(vech_size(p));
  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) c(vech_index(a, b, p)) = (a == b) ? -0.5 * s(a, a) : -s(a, b);
  }
  return c;
}

Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& m, const std::string& what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite()) {
    throw DomainError(what + " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double log_sum_exp(const VectorXd& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

struct MvnView {
  VectorXd mean;
  MatrixXd precision;
  MatrixXd covariance;
  double log_det_precision;
};

MvnView mvn_from_natural(const FactorFamily& family, const VectorXd& eta) {
  const int p = family.dim;
  MvnView v;
  v.precision = matrix_from_vech_coeffs(eta.tail(vech_size(p)), p);
  auto llt = checked_llt(v.precision, family.name() + " precision");
  v.covariance = llt.solve(MatrixXd::Identity(p, p));
  v.mean = llt.solve(eta.head(p));
  v.log_det_precision = log_det(llt);
  return v;
}

struct WishartView {
  double dof;
  MatrixXd scale;
  double log_det_scale;
};

WishartView wishart_from_natural(const FactorFamily& family, const VectorXd& eta) {
  const int p = family.dim;
  const MatrixXd inv_scale = matrix_from_vech_coeffs(eta.head(vech_size(p)), p);
  auto llt = checked_llt(inv_scale, family.name() + " inverse scale");
  WishartView w;
  w.dof = 2.0 * eta(vech_size(p)) + p + 1;
  if (!(w.dof > p - 1)) throw DomainError(family.name() + ": degrees of freedom must exceed P-1");
  w.scale = llt.solve(MatrixXd::Identity(p, p));
  w.log_det_scale = -log_det(llt);
  return w;
}

// Solves log(a) - digamma(a) = s for a > 0; the left side decreases from +inf to 0.
double solve_gamma_shape(double s) {
  auto f = [s](double a) { return std::log(a) - special::digamma(a) - s; };
  double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  double lo = a, hi = a;
  for (int i = 0; f(lo) < 0.0; ++i) {
    lo *= 0.5;
    if (i > 2000) throw NoConvergence("gamma shape: failed to bracket root");
  }
  for (int i = 0; f(hi) > 0.0; ++i) {
    hi *= 2.0;
    if (i > 2000) throw NoConvergence("gamma shape: failed to bracket root");
  }
  for (int it = 0; it < 200; ++it) {
    const double fa = f(a);
    if (fa == 0.0) return a;
    if (fa > 0.0) lo = a; else hi = a;
    double next = a - fa / (1.0 / a - special::trigamma(a));
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - a) <= 1e-15 * a) return next;
    a = next;
  }
  throw NoConvergence("gamma shape: Newton iteration did not converge");
}

VectorXd solve_dirichlet(const VectorXd& target) {
  const Index k = target.size();
  VectorXd alpha = VectorXd::Ones(k);
  // Fixed-point warm start, then Newton on the full system.
  for (int it = 0; it < 25; ++it) {
    const double psi0 = special::digamma(alpha.sum());
    for (Index i = 0; i < k; ++i) alpha(i) = special::inverse_digamma(target(i) + psi0);
  }
  auto residual = [&](const VectorXd& a) {
    const double psi0 = special::digamma(a.sum());
    VectorXd r(k);
    for (Index i = 0; i < k; ++i) r(i) = special::digamma(a(i)) - psi0 - target(i);
    return r;
  };
  VectorXd r = residual(alpha);
  for (int it = 0; it < 200; ++it) {
    const double scale = 1.0 + target.cwiseAbs().maxCoeff();
    if (r.cwiseAbs().maxCoeff() <= 1e-14 * scale) return alpha;
    MatrixXd jac = MatrixXd::Constant(k, k, -special::trigamma(alpha.sum()));
    for (Index i = 0; i < k; ++i) jac(i, i) += special::trigamma(alpha(i));
    const VectorXd step = jac.partialPivLu().solve(r);
    double t = 1.0;
    VectorXd next = alpha - step;
    while ((next.array() <= 0.0).any() || residual(next).norm() > r.norm() * (1.0 - 1e-4 * t)) {
      t *= 0.5;
      if (t < 1e-12) break;
      next = alpha - t * step;
    }
    if (t < 1e-12) {
      if (r.cwiseAbs().maxCoeff() <= 1e-10 * scale) return alpha;
      throw NoConvergence("dirichlet: Newton line search failed");
    }
    alpha = next;
    r = residual(alpha);
  }
  throw NoConvergence("dirichlet: Newton iteration did not converge");
}

// Solves mv_digamma(p, n) + p log 2 - p log n = t for n > p - 1. The left side
// increases monotonically from -inf to 0.
double solve_wishart_dof(int p, double t) {
  auto h = [p](double n) { return special::mv_digamma(p, n) + p * std::log(2.0) - p * std::log(n); };
  auto dh = [p](double n) { return 0.5 * special::mv_trigamma(p, n) - p / n; };
  double lo = p - 1.0, hi = p + 1.0;
  for (int i = 0; h(hi) < t; ++i) {
    lo = hi;
    hi *= 2.0;
    if (i > 2000) throw NoConvergence("wishart dof: failed to bracket root");
  }
  double n = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double hn = h(n) - t;
    if (hn == 0.0) return n;
    if (hn < 0.0) lo = n; else hi = n;
    double next = n - hn / dh(n);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - n) <= 1e-15 * n) return next;
    n = next;
  }
  throw NoConvergence("wishart dof: iteration did not converge");
}

}  // namespace

Index FactorFamily::num_stats() const {
  switch (kind) {
    case FamilyKind::GaussianUV: return 2;
    case FamilyKind::GaussianMV: return dim + vech_size(dim);
    case FamilyKind::Gamma: return 2;
    case FamilyKind::Dirichlet: return dim;
    case FamilyKind::Wishart: return vech_size(dim) + 1;
    case FamilyKind::Multinoulli: return dim;
  }
  return 0;
}

std::string FactorFamily::name() const {
  switch (kind) {
    case FamilyKind::GaussianUV: return "GaussianUV";
    case FamilyKind::GaussianMV: return "GaussianMV(" + std::to_string(dim) + ")";
    case FamilyKind::Gamma: return "Gamma";
    case FamilyKind::Dirichlet: return "Dirichlet(" + std::to_string(dim) + ")";
    case FamilyKind::Wishart: return "Wishart(" + std::to_string(dim) + ")";
    case FamilyKind::Multinoulli: return "Multinoulli(" + std::to_string(dim) + ")";
  }
  return "Unknown";
}

void FactorFamily::validate() const {
  if (dim < 1) throw DomainError(name() + ": dimension must be >= 1");
  if ((kind == FamilyKind::GaussianUV || kind == FamilyKind::Gamma) && dim != 1) {
    throw DomainError(name() + ": scalar family with dim != 1");
  }
}

std::vector<StatSlot> stat_layout(const FactorFamily& family) {
  const Index p = family.dim;
  switch (family.kind) {
    case FamilyKind::GaussianUV: return {{"x", 0, 1}, {"x2", 1, 1}};
    case FamilyKind::GaussianMV: return {{"x", 0, p}, {"vech_xx", p, vech_size(family.dim)}};
    case FamilyKind::Gamma: return {{"tau", 0, 1}, {"log_tau", 1, 1}};
    case FamilyKind::Dirichlet: return {{"log_pi", 0, p}};
    case FamilyKind::Wishart:
      return {{"vech_lambda", 0, vech_size(family.dim)}, {"log_det_lambda", vech_size(family.dim), 1}};
    case FamilyKind::Multinoulli: return {{"z", 0, p}};
  }
  return {};
}

Index vech_size(int p) { return static_cast<Index>(p) * (p + 1) / 2; }

Index vech_index(int a, int b, int p) {
  if (a > b) std::swap(a, b);
  // rows 0..a-1 contribute p, p-1, .., p-a+1 entries.
  return static_cast<Index>(a) * p - static_cast<Index>(a) * (a - 1) / 2 + (b - a);
}

VectorXd vech(const MatrixXd& m) {
  const int p = static_cast<int>(m.rows());
  VectorXd v(vech_size(p));
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b) v(vech_index(a, b, p)) = m(a, b);
  return v;
}

MatrixXd unvech(const Eigen::Ref<const VectorXd>& v, int p) {
  if (v.size() != vech_size(p)) throw DimensionMismatch("unvech: size mismatch");
  MatrixXd m(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b) m(a, b) = m(b, a) = v(vech_index(a, b, p));
  return m;
}

VectorXd mean_from_natural(const FactorFamily& family, const VectorXd& eta) {
  family.validate();
  require_size(family, eta, "natural parameter");
  const int p = family.dim;
  switch (family.kind) {
    case FamilyKind::GaussianUV: {
      require_finite(family, eta, "natural parameter");
      if (!(eta(1) < 0.0)) throw DomainError("GaussianUV: precision must be positive");
      const double var = -0.5 / eta(1);
      const double mu = eta(0) * var;
      return VectorXd{{mu, mu * mu + var}};
    }
    case FamilyKind::GaussianMV: {
      require_finite(family, eta, "natural parameter");
      const MvnView v = mvn_from_natural(family, eta);
      VectorXd out(family.num_stats());
      out.head(p) = v.mean;
      out.tail(vech_size(p)) = vech(v.covariance + v.mean * v.mean.transpose());
      return out;
    }
    case FamilyKind::Gamma: {
      require_finite(family, eta, "natural parameter");
      const double shape = eta(1) + 1.0, rate = -eta(0);
      if (!(shape > 0.0 && rate > 0.0)) throw DomainError("Gamma: shape and rate must be positive");
      return VectorXd{{shape / rate, special::digamma(shape) - std::log(rate)}};
    }
    case FamilyKind::Dirichlet: {
      require_finite(family, eta, "natural parameter");
      const VectorXd alpha = eta.array() + 1.0;
      if ((alpha.array() <= 0.0).any()) throw DomainError("Dirichlet: concentrations must be positive");
      const double psi0 = special::digamma(alpha.sum());
      VectorXd out(p);
      for (int i = 0; i < p; ++i) out(i) = special::digamma(alpha(i)) - psi0;
      return out;
    }
    case FamilyKind::Wishart: {
      require_finite(family, eta, "natural parameter");
      const WishartView w = wishart_from_natural(family, eta);
      VectorXd out(family.num_stats());
      out.head(vech_size(p)) = vech(w.dof * w.scale);
      out(vech_size(p)) = special::mv_digamma(p, w.dof) + p * std::log(2.0) + w.log_det_scale;
      return out;
    }
    case FamilyKind::Multinoulli: {
      if (eta.array().isNaN().any() || (eta.array() == std::numeric_limits<double>::infinity()).any() ||
          !std::isfinite(eta.maxCoeff())) {
        throw DomainError("Multinoulli: invalid logits");
      }
      return (eta.array() - log_sum_exp(eta)).exp().matrix();
    }
  }
  throw DomainError("unknown family");
}

double log_partition(const FactorFamily& family, const VectorXd& eta) {
  family.validate();
  require_size(family, eta, "natural parameter");
  const int p = family.dim;
  switch (family.kind) {
    case FamilyKind::GaussianUV: {
      if (!(eta(1) < 0.0)) throw DomainError("GaussianUV: precision must be positive");
      return -eta(0) * eta(0) / (4.0 * eta(1)) - 0.5 * std::log(-2.0 * eta(1)) + 0.5 * kLog2Pi;
    }
    case FamilyKind::GaussianMV: {
      const MvnView v = mvn_from_natural(family, eta);
      return 0.5 * v.mean.dot(eta.head(p)) - 0.5 * v.log_det_precision + 0.5 * p * kLog2Pi;
    }
    case FamilyKind::Gamma: {
      const double shape = eta(1) + 1.0, rate = -eta(0);
      if (!(shape > 0.0 && rate > 0.0)) throw DomainError("Gamma: shape and rate must be positive");
      return std::lgamma(shape) - shape * std::log(rate);
    }
    case FamilyKind::Dirichlet: {
      const VectorXd alpha = eta.array() + 1.0;
      if ((alpha.array() <= 0.0).any()) throw DomainError("Dirichlet: concentrations must be positive");
      double out = -std::lgamma(alpha.sum());
      for (int i = 0; i < p; ++i) out += std::lgamma(alpha(i));
      return out;
    }
    case FamilyKind::Wishart: {
      const WishartView w = wishart_from_natural(family, eta);
      return 0.5 * w.dof * p * std::log(2.0) + 0.5 * w.dof * w.log_det_scale +
             special::log_mv_gamma(p, 0.5 * w.dof);
    }
    case FamilyKind::Multinoulli: return log_sum_exp(eta);
  }
  throw DomainError("unknown family");
}

VectorXd natural_from_mean(const FactorFamily& family, const VectorXd& mean) {
  family.validate();
  require_size(family, mean, "mean parameter");
  require_finite(family, mean, "mean parameter");
  const int p = family.dim;
  switch (family.kind) {
    case FamilyKind::GaussianUV: {
      const double var = mean(1) - mean(0) * mean(0);
      if (!(var > 0.0)) throw DomainError("GaussianUV: E[x^2] must exceed E[x]^2");
      return VectorXd{{mean(0) / var, -0.5 / var}};
    }
    case FamilyKind::GaussianMV: {
      const VectorXd mu = mean.head(p);
      const MatrixXd cov = unvech(mean.tail(vech_size(p)), p) - mu * mu.transpose();
      auto llt = checked_llt(cov, family.name() + " covariance");
      const MatrixXd precision = llt.solve(MatrixXd::Identity(p, p));
      VectorXd eta(family.num_stats());
      eta.head(p) = precision * mu;
      eta.tail(vech_size(p)) = vech_coeffs_from_matrix(precision);
      return eta;
    }
    case FamilyKind::Gamma: {
      if (!(mean(0) > 0.0)) throw DomainError("Gamma: E[tau] must be positive");
      const double s = std::log(mean(0)) - mean(1);
      if (!(s > 0.0)) throw DomainError("Gamma: E[log tau] must be below log E[tau]");
      const double shape = solve_gamma_shape(s);
      return VectorXd{{-shape / mean(0), shape - 1.0}};
    }
    case FamilyKind::Dirichlet: {
      if ((mean.array() >= 0.0).any() || mean.array().exp().sum() >= 1.0) {
        throw DomainError("Dirichlet: E[log pi] outside the mean domain");
      }
      return (solve_dirichlet(mean).array() - 1.0).matrix();
    }
    case FamilyKind::Wishart: {
      const MatrixXd m = unvech(mean.head(vech_size(p)), p);
      auto llt = checked_llt(m, family.name() + " E[Lambda]");
      const double gap = mean(vech_size(p)) - log_det(llt);
      if (!(gap < 0.0)) throw DomainError("Wishart: E[log|Lambda|] must be below log|E[Lambda]|");
      const double dof = solve_wishart_dof(p, gap);
      const MatrixXd inv_scale = dof * llt.solve(MatrixXd::Identity(p, p));
      VectorXd eta(family.num_stats());
      eta.head(vech_size(p)) = vech_coeffs_from_matrix(inv_scale);
      eta(vech_size(p)) = 0.5 * (dof - p - 1);
      return eta;
    }
    case FamilyKind::Multinoulli: {
      if ((mean.array() <= 0.0).any() || std::abs(mean.sum() - 1.0) > 1e-10) {
        throw DomainError("Multinoulli: probabilities must lie in the open simplex");
      }
      return mean.array().log().matrix();
    }
  }
  throw DomainError("unknown family");
}

FactorState::FactorState(FactorFamily family, VectorXd natural, VectorXd mean)
    : family_(family), natural_(std::move(natural)), mean_(std::move(mean)) {}

FactorState FactorState::from_natural(const FactorFamily& family, VectorXd eta) {
  VectorXd m = mean_from_natural(family, eta);
  return FactorState(family, std::move(eta), std::move(m));
}

FactorState FactorState::from_mean(const FactorFamily& family, VectorXd mean) {
  VectorXd eta = natural_from_mean(family, mean);
  return FactorState(family, std::move(eta), std::move(mean));
}

FactorState FactorState::gaussian_uv(double mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(mean) || !std::isfinite(variance)) {
    throw DomainError("GaussianUV: variance must be positive and finite");
  }
  return FactorState(FactorFamily::gaussian_uv(), VectorXd{{mean / variance, -0.5 / variance}},
                     VectorXd{{mean, mean * mean + variance}});
}

FactorState FactorState::gaussian_mv(const VectorXd& mean, const MatrixXd& covariance) {
  const int p = static_cast<int>(mean.size());
  const FactorFamily fam = FactorFamily::gaussian_mv(p);
  if (covariance.rows() != p || covariance.cols() != p) throw DimensionMismatch("GaussianMV: covariance shape");
  const MatrixXd sym = 0.5 * (covariance + covariance.transpose());
  auto llt = checked_llt(sym, fam.name() + " covariance");
  const MatrixXd precision = llt.solve(MatrixXd::Identity(p, p));
  VectorXd eta(fam.num_stats()), m(fam.num_stats());
  eta.head(p) = precision * mean;
  eta.tail(vech_size(p)) = vech_coeffs_from_matrix(precision);
  m.head(p) = mean;
  m.tail(vech_size(p)) = vech(sym + mean * mean.transpose());
  return FactorState(fam, std::move(eta), std::move(m));
}

FactorState FactorState::gamma(double shape, double rate) {
  if (!(shape > 0.0 && rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw DomainError("Gamma: shape and rate must be positive");
  }
  return from_natural(FactorFamily::gamma(), VectorXd{{-rate, shape - 1.0}});
}

FactorState FactorState::dirichlet(const VectorXd& concentration) {
  return from_natural(FactorFamily::dirichlet(static_cast<int>(concentration.size())),
                      (concentration.array() - 1.0).matrix());
}

FactorState FactorState::wishart(double dof, const MatrixXd& scale) {
  const int p = static_cast<int>(scale.rows());
  const FactorFamily fam = FactorFamily::wishart(p);
  auto llt = checked_llt(0.5 * (scale + scale.transpose()), fam.name() + " scale");
  VectorXd eta(fam.num_stats());
  eta.head(vech_size(p)) = vech_coeffs_from_matrix(llt.solve(MatrixXd::Identity(p, p)));
  eta(vech_size(p)) = 0.5 * (dof - p - 1);
  return from_natural(fam, std::move(eta));
}

FactorState FactorState::multinoulli(const VectorXd& probs) {
  const FactorFamily fam = FactorFamily::multinoulli(static_cast<int>(probs.size()));
  if (!probs.allFinite() || (probs.array() < 0.0).any() || std::abs(probs.sum() - 1.0) > 1e-9) {
    throw DomainError("Multinoulli: probabilities must lie on the simplex");
  }
  VectorXd eta = probs.array().log().matrix();
  return FactorState(fam, std::move(eta), probs);
}

CovBlock covariance_block(const FactorState& state) {
  const FactorFamily& family = state.family();
  const int p = family.dim;
  switch (family.kind) {
    case FamilyKind::GaussianUV: {
      const GaussianParams g = gaussian_params(state);
      const double mu = g.mean(0), s2 = g.covariance(0, 0);
      if (!(s2 > 0.0)) throw DomainError("GaussianUV: zero variance");
      return MatrixXd{{s2, 2.0 * mu * s2}, {2.0 * mu * s2, 4.0 * mu * mu * s2 + 2.0 * s2 * s2}};
    }
    case FamilyKind::GaussianMV: {
      const GaussianParams g = gaussian_params(state);
      const VectorXd& mu = g.mean;
      const MatrixXd& s = g.covariance;
      const Index vs = vech_size(p);
      MatrixXd c(p + vs, p + vs);
      c.topLeftCorner(p, p) = s;
      for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) {
          for (int d = b; d < p; ++d) {
            const double v = mu(b) * s(a, d) + mu(d) * s(a, b);
            c(a, p + vech_index(b, d, p)) = v;
            c(p + vech_index(b, d, p), a) = v;
          }
        }
      }
      for (int a = 0; a < p; ++a) {
        for (int b = a; b < p; ++b) {
          const Index i = p + vech_index(a, b, p);
          for (int cc = 0; cc < p; ++cc) {
            for (int d = cc; d < p; ++d) {
              const Index j = p + vech_index(cc, d, p);
              c(i, j) = s(a, cc) * s(b, d) + s(a, d) * s(b, cc) + mu(a) * mu(cc) * s(b, d) +
                        mu(a) * mu(d) * s(b, cc) + mu(b) * mu(cc) * s(a, d) + mu(b) * mu(d) * s(a, cc);
            }
          }
        }
      }
      return c;
    }
    case FamilyKind::Gamma: {
      const GammaParams g = gamma_params(state);
      return MatrixXd{{g.shape / (g.rate * g.rate), 1.0 / g.rate},
                      {1.0 / g.rate, special::trigamma(g.shape)}};
    }
    case FamilyKind::Dirichlet: {
      const VectorXd alpha = dirichlet_params(state);
      MatrixXd c = MatrixXd::Constant(p, p, -special::trigamma(alpha.sum()));
      for (int i = 0; i < p; ++i) c(i, i) += special::trigamma(alpha(i));
      return c;
    }
    case FamilyKind::Wishart: {
      const WishartParams w = wishart_params(state);
      const MatrixXd& s = w.scale;
      const Index vs = vech_size(p);
      MatrixXd c(vs + 1, vs + 1);
      for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
          const Index r = vech_index(i, j, p);
          for (int k = 0; k < p; ++k) {
            for (int l = k; l < p; ++l) {
              c(r, vech_index(k, l, p)) = w.dof * (s(i, k) * s(j, l) + s(i, l) * s(j, k));
            }
          }
          c(r, vs) = c(vs, r) = 2.0 * s(i, j);
        }
      }
      c(vs, vs) = special::mv_trigamma(p, w.dof);
      return c;
    }
    case FamilyKind::Multinoulli: {
      const VectorXd& pr = state.mean();
      MatrixXd c = -pr * pr.transpose();
      c.diagonal() += pr;
      return c;
    }
  }
  throw DomainError("unknown family");
}

double entropy(const FactorState& state) {
  const FactorFamily& family = state.family();
  const int p = family.dim;
  switch (family.kind) {
    case FamilyKind::GaussianUV: {
      const double var = gaussian_params(state).covariance(0, 0);
      if (!(var > 0.0)) throw DomainError("GaussianUV: zero variance");
      return 0.5 * (kLog2Pi + 1.0 + std::log(var));
    }
    case FamilyKind::GaussianMV: {
      const MvnView v = mvn_from_natural(family, state.natural());
      return 0.5 * (p * (kLog2Pi + 1.0) - v.log_det_precision);
    }
    case FamilyKind::Gamma: {
      const GammaParams g = gamma_params(state);
      return g.shape - std::log(g.rate) + std::lgamma(g.shape) + (1.0 - g.shape) * special::digamma(g.shape);
    }
    case FamilyKind::Dirichlet: {
      const VectorXd alpha = dirichlet_params(state);
      const double a0 = alpha.sum();
      double out = -std::lgamma(a0) + (a0 - p) * special::digamma(a0);
      for (int i = 0; i < p; ++i) out += std::lgamma(alpha(i)) - (alpha(i) - 1.0) * special::digamma(alpha(i));
      return out;
    }
    case FamilyKind::Wishart: {
      const WishartView w = wishart_from_natural(family, state.natural());
      const double a = log_partition(family, state.natural());
      const double e_log_det = special::mv_digamma(p, w.dof) + p * std::log(2.0) + w.log_det_scale;
      return a + 0.5 * w.dof * p - 0.5 * (w.dof - p - 1) * e_log_det;
    }
    case FamilyKind::Multinoulli: {
      double out = 0.0;
      for (int i = 0; i < p; ++i) {
        const double pr = state.mean()(i);
        if (pr > 0.0) out -= pr * std::log(pr);
      }
      return out;
    }
  }
  throw DomainError("unknown family");
}

GaussianParams gaussian_params(const FactorState& state) {
  const FactorFamily& family = state.family();
  const VectorXd& eta = state.natural();
  if (family.kind == FamilyKind::GaussianUV) {
    const double var = -0.5 / eta(1);
    return {VectorXd::Constant(1, eta(0) * var), MatrixXd::Constant(1, 1, var)};
  }
  if (family.kind == FamilyKind::GaussianMV) {
    MvnView v = mvn_from_natural(family, eta);
    return {std::move(v.mean), std::move(v.covariance)};
  }
  throw DomainError(family.name() + " is not Gaussian");
}

GammaParams gamma_params(const FactorState& state) {
  if (state.family().kind != FamilyKind::Gamma) throw DomainError(state.family().name() + " is not Gamma");
  return {state.natural()(1) + 1.0, -state.natural()(0)};
}

VectorXd dirichlet_params(const FactorState& state) {
  if (state.family().kind != FamilyKind::Dirichlet) {
    throw DomainError(state.family().name() + " is not Dirichlet");
  }
  return (state.natural().array() + 1.0).matrix();
}

WishartParams wishart_params(const FactorState& state) {
  if (state.family().kind != FamilyKind::Wishart) throw DomainError(state.family().name() + " is not Wishart");
  WishartView w = wishart_from_natural(state.family(), state.natural());
  return {w.dof, std::move(w.scale)};
}

}  // namespace lrvb::expfam
