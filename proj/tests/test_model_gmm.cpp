#include "doctest.h"

#include "lrvb/error.hpp"
#include "lrvb/models/gmm.hpp"
#include "lrvb/oracles/finite_diff.hpp"
#include "lrvb/oracles/samplers.hpp"

#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>

using namespace lrvb;
using namespace lrvb::models;
using expfam::vech_index;

namespace {

GmmSimulation simulate(int n, int k, int p, double separation, std::uint64_t seed) {
  GmmSimConfig cfg;
  cfg.n = n;
  cfg.k = k;
  cfg.p = p;
  cfg.separation = separation;
  return gmm_simulate(cfg, seed);
}

double abs_elbo(const FitResult& fit) { return std::max(1.0, std::abs(fit.trace.elbo.back())); }

// Exact posterior covariance of (mu, vech mu mu', vech Lambda, log|Lambda|) for one
// component under a flat mean prior and a Wishart(W0, n0) precision prior:
// Lambda ~ W(nu, W), mu | Lambda ~ N(xbar, (N Lambda)^{-1}).
MatrixXd normal_wishart_covariance(const MatrixXd& x, const GmmPriors& priors) {
  const int p = static_cast<int>(x.cols());
  const double n = static_cast<double>(x.rows());
  const VectorXd xbar = x.colwise().mean();
  const MatrixXd c = x.rowwise() - xbar.transpose();
  const MatrixXd psi = priors.wishart_inverse_scale * MatrixXd::Identity(p, p) + c.transpose() * c;  // W^{-1}
  const MatrixXd w = psi.inverse();
  const double nu = priors.wishart_dof + n - 1.0;
  const double dp = static_cast<double>(p);

  // X = Lambda^{-1} ~ inverse Wishart(psi, nu).
  const MatrixXd ex = psi / (nu - dp - 1.0);
  auto cov_x = [&](int i, int j, int k, int l) {
    return (2.0 * psi(i, j) * psi(k, l) + (nu - dp - 1.0) * (psi(i, k) * psi(j, l) + psi(i, l) * psi(k, j))) /
           ((nu - dp) * (nu - dp - 1.0) * (nu - dp - 1.0) * (nu - dp - 3.0));
  };
  // delta = mu - xbar; E[S_ab S_cd] with S = X / N.
  auto ess = [&](int a, int b, int cc, int d) { return (cov_x(a, b, cc, d) + ex(a, b) * ex(cc, d)) / (n * n); };
  const MatrixXd cd = ex / n;  // Cov(mu)
  auto cov_dd = [&](int a, int b, int cc, int d) {
    return ess(a, b, cc, d) + ess(a, cc, b, d) + ess(a, d, b, cc) - cd(a, b) * cd(cc, d);
  };

  const Index vs = expfam::vech_size(p);
  const Index dim = p + vs + vs + 1;
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b) pairs.emplace_back(a, b);
  MatrixXd out = MatrixXd::Zero(dim, dim);
  const Index mo = p, lo = p + vs, ld = p + 2 * vs;
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < p; ++b) out(a, b) = cd(a, b);
    for (Index s = 0; s < vs; ++s) {
      const auto [i, j] = pairs[s];
      out(a, mo + s) = out(mo + s, a) = xbar(i) * cd(a, j) + xbar(j) * cd(a, i);
    }
  }
  for (Index s = 0; s < vs; ++s) {
    const auto [a, b] = pairs[s];
    for (Index t = 0; t < vs; ++t) {
      const auto [cc, d] = pairs[t];
      out(mo + s, mo + t) = xbar(a) * xbar(cc) * cd(b, d) + xbar(a) * xbar(d) * cd(b, cc) +
                            xbar(b) * xbar(cc) * cd(a, d) + xbar(b) * xbar(d) * cd(a, cc) + cov_dd(a, b, cc, d);
      // Cov(Lambda^{-1}_ab, Lambda_cd) = -(d_ac d_bd + d_ad d_bc) / (nu - p - 1)
      const double kron = (a == cc && b == d ? 1.0 : 0.0) + (a == d && b == cc ? 1.0 : 0.0);
      out(mo + s, lo + t) = out(lo + t, mo + s) = -kron / ((nu - dp - 1.0) * n);
      out(lo + s, lo + t) = nu * (w(a, cc) * w(b, d) + w(a, d) * w(b, cc));
    }
    // Cov(Lambda^{-1}_ab, log|Lambda|) = -2 W^{-1}_ab / (nu - p - 1)^2
    out(mo + s, ld) = out(ld, mo + s) = -2.0 * psi(a, b) / ((nu - dp - 1.0) * (nu - dp - 1.0) * n);
    out(lo + s, ld) = out(ld, lo + s) = 2.0 * w(a, b);
  }
  double v = 0.0;
  for (int i = 1; i <= p; ++i) v += boost::math::trigamma(0.5 * (nu + 1.0 - i));
  out(ld, ld) = v;
  return out;
}

}  // namespace

TEST_CASE("simulation: determinism and the single-component case") {
  const GmmSimulation a = simulate(500, 2, 2, 3.0, 4), b = simulate(500, 2, 2, 3.0, 4);
  CHECK(a.data.x == b.data.x);
  CHECK(a.truth.labels == b.truth.labels);

  const GmmSimulation one = simulate(20000, 1, 3, 3.0, 5);
  const VectorXd mean = one.data.x.colwise().mean();
  const MatrixXd c = one.data.x.rowwise() - mean.transpose();
  const MatrixXd cov = c.transpose() * c / 19999.0;
  CHECK((mean - one.truth.means[0]).cwiseAbs().maxCoeff() < 0.05);
  CHECK((cov - one.truth.covariances[0]).cwiseAbs().maxCoeff() < 0.05);

  GmmSimConfig bad;
  bad.pi = VectorXd::Constant(2, 0.7);
  CHECK_THROWS_AS(gmm_simulate(bad, 1), ConfigError);
}

TEST_CASE("mean update with every point in one component") {
  const GmmSimulation sim = simulate(100, 2, 2, 3.0, 6);
  const GmmProblem problem(sim.data, GmmPriors{}, 2);
  std::vector<expfam::FactorState> f = problem.truth_init(sim.truth);
  VectorXd m = stack_means(f, problem.layout());
  const GmmIndex& ix = problem.index();
  for (Index n = 0; n < 100; ++n) {
    m(ix.z(n, 0)) = 1.0;
    m(ix.z(n, 1)) = 0.0;
  }
  const MatrixXd e_lambda = expfam::unvech(m.segment(ix.lambda(0), 3), 2);
  const MatrixXd prec = 100.0 * e_lambda + 0.01 * MatrixXd::Identity(2, 2);
  const VectorXd expected = prec.ldlt().solve(e_lambda * sim.data.x.colwise().sum().transpose());
  const auto mu = expfam::gaussian_params(problem.update_mu(m, 0));
  CHECK((mu.mean - expected).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((mu.covariance - prec.inverse()).cwiseAbs().maxCoeff() <= 1e-12);
  // Component 1 has no mass: the Wishart update refuses it.
  CHECK_THROWS_AS(problem.update_lambda(m, 1), DomainError);
}

TEST_CASE("symmetric data and start give a symmetric pi update") {
  MatrixXd x(40, 2);
  const GmmSimulation sim = simulate(20, 1, 2, 0.0, 8);
  x.topRows(20) = sim.data.x;
  x.bottomRows(20) = -sim.data.x;
  const GmmProblem problem(GmmDataset{x}, GmmPriors{}, 2);
  std::vector<expfam::FactorState> f = problem.moment_init();
  VectorXd m = stack_means(f, problem.layout());
  for (Index n = 0; n < 40; ++n) m(problem.index().z(n, 0)) = m(problem.index().z(n, 1)) = 0.5;
  const VectorXd alpha = expfam::dirichlet_params(problem.update_pi(m));
  CHECK(alpha(0) == doctest::Approx(alpha(1)).epsilon(1e-14));
}

TEST_CASE("fit: convergence, simplex rows, monotone ELBO, fixed point") {
  const GmmSimulation sim = simulate(300, 2, 2, 3.0, 9);
  const GmmProblem problem(sim.data, GmmPriors{}, 2);
  const FitResult fit = coordinate_ascent(problem, problem.truth_init(sim.truth));
  CHECK(fit.trace.converged);
  CHECK(fit.trace.max_elbo_decrease <= 1e-12 * abs_elbo(fit));
  const GmmIndex& ix = problem.index();
  for (Index n = 0; n < 300; ++n) {
    CHECK(std::abs(fit.m(ix.z(n, 0)) + fit.m(ix.z(n, 1)) - 1.0) <= 1e-12);
  }
  for (std::size_t j = 0; j < problem.layout().num_blocks(); ++j) {
    const auto& blk = problem.layout().block(j);
    CHECK((problem.update_factor(j, fit.m).mean() - fit.m.segment(blk.offset, blk.size)).cwiseAbs().maxCoeff() <=
          1e-8 * std::max(1.0, fit.m.segment(blk.offset, blk.size).cwiseAbs().maxCoeff()));
  }
  // The moment-based start reaches the same optimum.
  const FitResult other = coordinate_ascent(problem, problem.moment_init());
  REQUIRE(other.trace.converged);
  CHECK((other.m - fit.m).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("Hessian: every formula family, finite differences and H_zz = 0") {
  const GmmSimulation sim = simulate(20, 2, 2, 3.0, 10);
  const GmmProblem problem(sim.data, GmmPriors{}, 2);
  const FitResult fit = coordinate_ascent(problem, problem.truth_init(sim.truth));
  REQUIRE(fit.trace.converged);
  const HessianMatrix hm = problem.hessian(fit.m);
  CHECK(hm.zz_structure == ZzStructure::Zero);
  const MatrixXd h = hm.to_dense(problem.layout());
  const MatrixXd fd =
      oracles::fd_hessian([&](const VectorXd& m) { return problem.expected_log_posterior(m); }, fit.m);
  CHECK((h - fd).cwiseAbs().maxCoeff() <= 1e-4);

  const GmmIndex& ix = problem.index();
  const MatrixXd& x = sim.data.x;
  const auto& m = fit.m;
  for (int c = 0; c < 2; ++c) {
    const MatrixXd lam = expfam::unvech(m.segment(ix.lambda(c), 3), 2);
    const VectorXd mu = m.segment(ix.mu(c), 2);
    for (int a = 0; a < 2; ++a) {
      for (int b = a; b < 2; ++b) {
        const double half = a == b ? 0.5 : 1.0;
        double s_zx = 0.0, s_z = 0.0;
        for (Index n = 0; n < 20; ++n) {
          s_zx += m(ix.z(n, c)) * x(n, b);
          s_z += m(ix.z(n, c));
        }
        CHECK(h(ix.mu(c) + a, ix.lambda(c) + vech_index(a, b, 2)) == doctest::Approx(s_zx));
        CHECK(h(ix.mu_outer(c) + vech_index(a, b, 2), ix.lambda(c) + vech_index(a, b, 2)) ==
              doctest::Approx(-half * s_z));
        for (Index n : {Index{0}, Index{7}}) {
          const double quad = x(n, a) * x(n, b) - mu(a) * x(n, b) - mu(b) * x(n, a);
          CHECK(h(ix.mu_outer(c) + vech_index(a, b, 2), ix.z(n, c)) == doctest::Approx(-half * lam(a, b)));
          CHECK(h(ix.lambda(c) + vech_index(a, b, 2), ix.z(n, c)) ==
                doctest::Approx(-half * (quad + m(ix.mu_outer(c) + vech_index(a, b, 2)))));
        }
      }
      for (Index n : {Index{0}, Index{7}}) {
        CHECK(h(ix.mu(c) + a, ix.z(n, c)) == doctest::Approx(lam.row(a).dot(x.row(n))));
      }
    }
    for (Index n : {Index{0}, Index{7}}) {
      CHECK(h(ix.log_det(c), ix.z(n, c)) == 0.5);
      CHECK(h(ix.log_pi(c), ix.z(n, c)) == 1.0);
      CHECK(h(ix.log_pi(1 - c), ix.z(n, c)) == 0.0);
    }
  }
  // No products between components' means.
  for (Index i = ix.mu(0); i < ix.mu(0) + ix.mu_size(); ++i)
    for (Index j = ix.mu(1); j < ix.mu(1) + ix.mu_size(); ++j) CHECK(h(i, j) == 0.0);
  const auto z = problem.layout().z_indices();
  CHECK(h(z, z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("LRVB via the identity inner solve equals the full stacked solve") {
  const GmmSimulation sim = simulate(200, 2, 2, 2.0, 11);
  const GmmProblem problem(sim.data, GmmPriors{}, 2);
  const GmmLrvb res = gmm_lrvb(problem, problem.truth_init(sim.truth));
  REQUIRE(res.fit.trace.converged);
  const LrvbResult full =
      lrvb_full(assemble_V(res.fit.factors, problem.layout()), problem.hessian(res.fit.m), problem.layout());
  const auto a = problem.layout().alpha_indices();
  const MatrixXd fa = full.sigma_hat(a, a);
  CHECK((res.lrvb.sigma_hat - fa).cwiseAbs().maxCoeff() <= 1e-6 * fa.cwiseAbs().maxCoeff());
  CHECK(res.lrvb.diagnostics.z_solver == "identity");
}

TEST_CASE("well separated components: LRVB close to MFVB") {
  const GmmSimulation sim = simulate(1000, 2, 2, 20.0, 12);
  const GmmProblem problem(sim.data, GmmPriors{}, 2);
  const GmmLrvb res = gmm_lrvb(problem, problem.truth_init(sim.truth));
  for (const auto& p : res.params) {
    if (p.name.rfind("mu", 0) == 0) CHECK(std::abs(p.lrvb_sd / p.mfvb_sd - 1.0) < 0.02);
  }
}

TEST_CASE("one component: LRVB matches the conjugate normal-Wishart posterior") {
  const GmmSimulation sim = simulate(10000, 1, 2, 0.0, 13);
  const GmmPriors priors;
  const GmmProblem problem(sim.data, priors, 1);
  const GmmLrvb res = gmm_lrvb(problem, problem.moment_init());
  REQUIRE(res.fit.trace.converged);
  const MatrixXd truth = normal_wishart_covariance(sim.data.x, priors);
  const GmmIndex& ix = problem.index();
  std::vector<Index> coords;
  for (Index i = ix.mu(0); i < ix.log_det(0) + 1; ++i) coords.push_back(result_position(res.lrvb, i));
  const MatrixXd est = res.lrvb.sigma_hat(coords, coords);
  // Compare the mean-statistic and precision-statistic blocks, each against its own scale.
  const Index mu_end = ix.mu_size();
  const MatrixXd tm = truth.topLeftCorner(mu_end, mu_end), em = est.topLeftCorner(mu_end, mu_end);
  const MatrixXd tl = truth.bottomRightCorner(4, 4), el = est.bottomRightCorner(4, 4);
  CHECK((em - tm).cwiseAbs().maxCoeff() <= 1e-3 * tm.cwiseAbs().maxCoeff());
  CHECK((el - tl).cwiseAbs().maxCoeff() <= 1e-3 * tl.cwiseAbs().maxCoeff());
}

TEST_CASE("Gibbs sampler: conjugate single component and reproducibility") {
  const GmmSimulation sim = simulate(500, 1, 2, 0.0, 14);
  const GmmPriors priors;
  oracles::SamplerOptions so;
  so.draws = 20000;
  so.burnin = 500;
  so.seed = 21;
  oracles::GmmSamplerOptions go;
  go.k = 1;
  const oracles::ChainSummary ch = oracles::gibbs_gmm(sim.data, priors, so, go);

  const double a = priors.mu_precision, n = 500.0;
  const VectorXd xbar = sim.data.x.colwise().mean();
  const MatrixXd c = sim.data.x.rowwise() - xbar.transpose();
  const MatrixXd w_inv = priors.wishart_inverse_scale * MatrixXd::Identity(2, 2) + c.transpose() * c +
                         (a * n / (a + n)) * xbar * xbar.transpose();
  const MatrixXd w = w_inv.inverse();
  const double nu = priors.wishart_dof + n;
  for (int i = 0; i < 2; ++i) {
    const Index k = ch.index_of("mu[0][" + std::to_string(i) + "]");
    CHECK(std::abs(ch.mean(k) - n * xbar(i) / (a + n)) <= 3.0 * ch.mean_se(k));
    CHECK(std::abs(ch.sd(k) - std::sqrt(w_inv(i, i) / ((a + n) * (nu - 3.0)))) <= 3.0 * ch.sd_se(k));
    for (int j = i; j < 2; ++j) {
      const Index l = ch.index_of("lambda[0][" + std::to_string(i) + "," + std::to_string(j) + "]");
      CHECK(std::abs(ch.mean(l) - nu * w(i, j)) <= 3.0 * ch.mean_se(l));
      CHECK(std::abs(ch.sd(l) - std::sqrt(nu * (w(i, j) * w(i, j) + w(i, i) * w(j, j)))) <= 3.0 * ch.sd_se(l));
    }
  }
  CHECK_FALSE(ch.label_switch);
  const oracles::ChainSummary again = oracles::gibbs_gmm(sim.data, priors, so, go);
  CHECK(again.draws == ch.draws);
}

TEST_CASE("Gibbs sampler: separated clusters show no label switching") {
  const GmmSimulation sim = simulate(400, 2, 2, 12.0, 15);
  oracles::SamplerOptions so;
  so.draws = 2000;
  so.burnin = 200;
  so.seed = 2;
  const oracles::ChainSummary ch = oracles::gibbs_gmm(sim.data, GmmPriors{}, so);
  CHECK_FALSE(ch.label_switch);

  // Starting from swapped labels: the start is also the reference, so no switch is reported.
  oracles::GmmSamplerOptions go;
  go.start = oracles::GmmGibbsStart{{sim.truth.means[1], sim.truth.means[0]},
                                     {sim.truth.precisions[1], sim.truth.precisions[0]},
                                     sim.truth.pi};
  const oracles::ChainSummary swapped = oracles::gibbs_gmm(sim.data, GmmPriors{}, so, go);
  CHECK_FALSE(swapped.label_switch);
}

TEST_CASE("scaling slope from synthetic timings") {
  std::vector<ScalingRow> rows;
  for (int n : {1000, 2000, 4000, 8000})
    for (int rep = 0; rep < 3; ++rep) rows.push_back({n, 2, 2, rep, "lrvb_total", 1e-6 * n * (1.0 + 0.01 * rep)});
  CHECK(scaling_slope(rows, "n") == doctest::Approx(1.0).epsilon(1e-6));
  std::vector<ScalingRow> prow;
  for (int p : {2, 4, 6, 8}) prow.push_back({1000, 2, p, 0, "lrvb_total", 1e-3 * p * p * p});
  CHECK(scaling_slope(prow, "p") == doctest::Approx(3.0).epsilon(1e-6));
}
