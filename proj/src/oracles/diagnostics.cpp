#include "lrvb/oracles/diagnostics.hpp"

#include "lrvb/error.hpp"

#include <algorithm>
#include <cmath>

namespace lrvb::oracles {

double ess(const Eigen::Ref<const VectorXd>& draws, bool* constant) {
  const Index n = draws.size();
  if (n < 100) throw TooFewDraws("ess: need at least 100 draws, got " + std::to_string(n));
  const VectorXd c = draws.array() - draws.mean();
  const double c0 = c.squaredNorm() / n;
  if (constant) *constant = false;
  if (!(c0 > 0.0)) {
    if (constant) *constant = true;
    return 0.0;
  }
  auto rho = [&](Index t) { return c.head(n - t).dot(c.tail(n - t)) / (n * c0); };
  double sum = 0.0;  // sum of rho_t for t >= 1
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    const double r0 = k == 0 ? 1.0 : rho(2 * k);
    const double r1 = rho(2 * k + 1);
    if (r0 + r1 <= 0.0) break;
    sum += (k == 0 ? 0.0 : r0) + r1;
  }
  const double tau = 1.0 + 2.0 * sum;
  return std::min(static_cast<double>(n), n / tau);
}

namespace {

std::vector<VectorXd> split_batches(const Eigen::Ref<const VectorXd>& draws, int batches) {
  const Index n = draws.size();
  if (batches < 2 || n < 2 * batches) throw TooFewDraws("batch standard error: too few draws for the batch count");
  const Index len = n / batches;
  std::vector<VectorXd> out;
  for (int b = 0; b < batches; ++b) out.push_back(draws.segment(b * len, len));
  return out;
}

double batch_se(const std::vector<double>& stats) {
  const double b = static_cast<double>(stats.size());
  double mean = 0.0;
  for (double s : stats) mean += s;
  mean /= b;
  double var = 0.0;
  for (double s : stats) var += (s - mean) * (s - mean);
  var /= (b - 1.0);
  return std::sqrt(var / b);
}

double sample_sd(const VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

double sd_standard_error(const Eigen::Ref<const VectorXd>& draws, int batches) {
  std::vector<double> stats;
  for (const auto& b : split_batches(draws, batches)) stats.push_back(sample_sd(b));
  return batch_se(stats);
}

double mean_standard_error(const Eigen::Ref<const VectorXd>& draws, int batches) {
  std::vector<double> stats;
  for (const auto& b : split_batches(draws, batches)) stats.push_back(b.mean());
  return batch_se(stats);
}

Index ChainSummary::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw LayoutMismatch("chain does not track " + name);
  return static_cast<Index>(it - names.begin());
}

double ChainSummary::min_ess() const { return ess.size() ? ess.minCoeff() : 0.0; }

ChainSummary summarize_chain(std::vector<std::string> names, MatrixXd draws, std::uint64_t seed, Index burnin) {
  if (static_cast<Index>(names.size()) != draws.cols()) throw DimensionMismatch("summarize_chain: names vs columns");
  ChainSummary s;
  s.names = std::move(names);
  s.seed = seed;
  s.burnin = burnin;
  s.num_draws = draws.rows();
  const Index f = draws.cols();
  s.mean = draws.colwise().mean().transpose();
  const MatrixXd centred = draws.rowwise() - s.mean.transpose();
  s.cov = centred.transpose() * centred / static_cast<double>(std::max<Index>(1, draws.rows() - 1));
  s.sd = s.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.ess.resize(f);
  s.mean_se.resize(f);
  s.sd_se.resize(f);
  for (Index j = 0; j < f; ++j) {
    bool constant = false;
    s.ess(j) = ess(draws.col(j), &constant);
    if (constant) s.warnings.push_back("constant chain for " + s.names[j] + ": ESS set to 0");
    s.mean_se(j) = mean_standard_error(draws.col(j));
    s.sd_se(j) = sd_standard_error(draws.col(j));
  }
  s.draws = std::move(draws);
  return s;
}

}  // namespace lrvb::oracles
