#include "doctest.h"

#include "lrvb/error.hpp"
#include "lrvb/expfam.hpp"
#include "lrvb/special.hpp"

#include <cmath>
#include <random>

using namespace lrvb;
using namespace lrvb::expfam;

namespace {

MatrixXd fd_mean_jacobian(const FactorFamily& fam, const VectorXd& eta, double h = 1e-5) {
  const Index n = eta.size();
  MatrixXd j(n, n);
  for (Index c = 0; c < n; ++c) {
    VectorXd up = eta, dn = eta;
    const double step = h * std::max(1.0, std::abs(eta(c)));
    up(c) += step;
    dn(c) -= step;
    j.col(c) = (mean_from_natural(fam, up) - mean_from_natural(fam, dn)) / (2.0 * step);
  }
  return j;
}

MatrixXd spd(int p, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  MatrixXd a(p, p);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  return a * a.transpose() + p * MatrixXd::Identity(p, p);
}

std::vector<FactorState> sample_states(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  VectorXd probs(4);
  probs << 0.1, 0.2, 0.3, 0.4;
  VectorXd alpha(3);
  alpha << u(rng), u(rng), u(rng);
  VectorXd mu(3);
  mu << 0.3, -1.0, 2.0;
  return {FactorState::gaussian_uv(0.7, 1.3),
          FactorState::gaussian_mv(mu, spd(3, rng) / 3.0),
          FactorState::gamma(u(rng), u(rng)),
          FactorState::dirichlet(alpha),
          FactorState::wishart(5.5, spd(3, rng) / 10.0),
          FactorState::multinoulli(probs)};
}

}  // namespace

TEST_CASE("vech layout is upper triangle row-wise") {
  CHECK(vech_size(3) == 6);
  CHECK(vech_index(0, 0, 3) == 0);
  CHECK(vech_index(0, 2, 3) == 2);
  CHECK(vech_index(1, 1, 3) == 3);
  CHECK(vech_index(2, 2, 3) == 5);
  MatrixXd m(2, 2);
  m << 1, 2, 2, 3;
  const VectorXd v = vech(m);
  CHECK(v(0) == 1);
  CHECK(v(1) == 2);
  CHECK(v(2) == 3);
  CHECK((unvech(v, 2) - m).norm() == 0.0);
}

TEST_CASE("Gamma(2,1) mean parameters and moment covariance") {
  const FactorState g = FactorState::gamma(2.0, 1.0);
  CHECK(g.mean()(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(g.mean()(1) == doctest::Approx(1.0 - 0.57721566490153286).epsilon(1e-12));
  const MatrixXd c = covariance_block(g);
  CHECK(c(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(c(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c(1, 1) == doctest::Approx(0.6449340668482264).epsilon(1e-10));
}

TEST_CASE("GaussianUV mean parameters") {
  const FactorState g = FactorState::gaussian_uv(1.5, 0.25);
  CHECK(g.mean()(0) == doctest::Approx(1.5));
  CHECK(g.mean()(1) == doctest::Approx(2.5));
  const MatrixXd c = covariance_block(g);
  // Var(x) = s, Cov(x, x^2) = 2 mu s, Var(x^2) = 4 mu^2 s + 2 s^2
  CHECK(c(0, 0) == doctest::Approx(0.25));
  CHECK(c(0, 1) == doctest::Approx(0.75));
  CHECK(c(1, 1) == doctest::Approx(4 * 2.25 * 0.25 + 2 * 0.0625));
}

TEST_CASE("round trip natural -> mean -> natural for every family") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    for (const auto& s : sample_states(rng)) {
      CAPTURE(s.family().name());
      const VectorXd eta2 = natural_from_mean(s.family(), s.mean());
      VectorXd d = eta2 - s.natural();
      if (s.family().kind == FamilyKind::Multinoulli) d.array() -= d.mean();
      const double rel = d.cwiseAbs().maxCoeff() / std::max(1.0, s.natural().cwiseAbs().maxCoeff());
      CHECK(rel <= 1e-8);
    }
  }
}

TEST_CASE("covariance_block equals the Jacobian of the mean map") {
  std::mt19937_64 rng(12);
  for (const auto& s : sample_states(rng)) {
    CAPTURE(s.family().name());
    const MatrixXd exact = covariance_block(s);
    const MatrixXd fd = fd_mean_jacobian(s.family(), s.natural());
    const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
    CHECK((exact - fd).cwiseAbs().maxCoeff() / scale <= 1e-5);
    CHECK((exact - exact.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("covariance_block matches the Monte Carlo covariance for Wishart") {
  std::mt19937_64 rng(13);
  MatrixXd w(2, 2);
  w << 0.5, 0.1, 0.1, 0.3;
  const double n = 6.0;
  const FactorState s = FactorState::wishart(n, w);
  // Draw by summing outer products of n Gaussian vectors (integer dof).
  const Eigen::LLT<MatrixXd> llt(w);
  std::normal_distribution<double> nd;
  const int draws = 200000;
  MatrixXd stats(draws, 4);
  for (int d = 0; d < draws; ++d) {
    MatrixXd lam = MatrixXd::Zero(2, 2);
    for (int i = 0; i < 6; ++i) {
      VectorXd g(2);
      g << nd(rng), nd(rng);
      const VectorXd x = llt.matrixL() * g;
      lam += x * x.transpose();
    }
    stats.row(d).head(3) = vech(lam).transpose();
    stats(d, 3) = std::log(lam.determinant());
  }
  const VectorXd mean = stats.colwise().mean();
  const MatrixXd centred = stats.rowwise() - mean.transpose();
  const MatrixXd mc = centred.transpose() * centred / (draws - 1);
  CHECK((mean - s.mean()).cwiseAbs().maxCoeff() <= 0.02);
  const MatrixXd exact = covariance_block(s);
  CHECK(((mc - exact).array().abs() / (exact.array().abs() + 0.05)).maxCoeff() <= 0.05);
}

TEST_CASE("entropy agrees with A(eta) - eta' m") {
  std::mt19937_64 rng(14);
  for (const auto& s : sample_states(rng)) {
    CAPTURE(s.family().name());
    // All base measures are constant, so H = A(eta) - eta'm.
    const double dual = log_partition(s.family(), s.natural()) - s.natural().dot(s.mean());
    CHECK(entropy(s) == doctest::Approx(dual).epsilon(1e-10));
  }
  // Closed-form checks.
  CHECK(entropy(FactorState::gaussian_uv(0.0, 2.0)) ==
        doctest::Approx(0.5 * std::log(2 * M_PI * std::exp(1.0) * 2.0)).epsilon(1e-12));
  const double a = 3.0, b = 2.0;
  CHECK(entropy(FactorState::gamma(a, b)) ==
        doctest::Approx(a - std::log(b) + std::lgamma(a) + (1 - a) * special::digamma(a)).epsilon(1e-12));
  VectorXd p(3);
  p << 0.2, 0.3, 0.5;
  CHECK(entropy(FactorState::multinoulli(p)) ==
        doctest::Approx(-(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5))).epsilon(1e-12));
}

TEST_CASE("Dirichlet moment covariance") {
  VectorXd a(3);
  a << 1.0, 2.0, 3.0;
  const MatrixXd c = covariance_block(FactorState::dirichlet(a));
  CHECK(c(0, 0) == doctest::Approx(special::trigamma(1.0) - special::trigamma(6.0)));
  CHECK(c(0, 1) == doctest::Approx(-special::trigamma(6.0)));
}

TEST_CASE("multinoulli accepts boundary probabilities") {
  VectorXd p(3);
  p << 0.0, 0.25, 0.75;
  const FactorState s = FactorState::multinoulli(p);
  CHECK(s.mean()(0) == 0.0);
  const MatrixXd c = covariance_block(s);
  CHECK(c(0, 0) == 0.0);
  CHECK(c(1, 2) == doctest::Approx(-0.1875));
  CHECK(std::isfinite(entropy(s)));
}

TEST_CASE("inadmissible parameters raise DomainError") {
  CHECK_THROWS_AS(FactorState::gamma(-1.0, 1.0), DomainError);
  CHECK_THROWS_AS(FactorState::gaussian_uv(0.0, -1.0), DomainError);
  VectorXd m(2);
  m << 1.0, 0.5;  // E[x^2] < E[x]^2
  CHECK_THROWS_AS(natural_from_mean(FactorFamily::gaussian_uv(), m), DomainError);
  VectorXd g(2);
  g << 2.0, std::log(2.0) + 0.1;  // Jensen: E log tau < log E tau
  CHECK_THROWS_AS(natural_from_mean(FactorFamily::gamma(), g), DomainError);
  CHECK_THROWS_AS(FactorState::wishart(0.5, MatrixXd::Identity(2, 2)), DomainError);
}
