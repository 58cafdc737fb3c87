#include "lrvb/models/mvn.hpp"

#include "lrvb/error.hpp"

#include <cmath>

namespace lrvb::models {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

MvnTarget MvnTarget::make(VectorXd mean, MatrixXd cov) {
  const Index d = mean.size();
  if (d < 1 || cov.rows() != d || cov.cols() != d) throw DimensionMismatch("MvnTarget: shape mismatch");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw DomainError("MvnTarget: covariance not symmetric");
  }
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw DomainError("MvnTarget: covariance not positive definite");
  MvnTarget t;
  t.mean = std::move(mean);
  t.precision = llt.solve(MatrixXd::Identity(d, d));
  t.precision = 0.5 * (t.precision + t.precision.transpose());
  t.cov = std::move(cov);
  return t;
}

MvnTarget random_mvn_target(int dim, double max_condition, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd g(dim, dim);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
  VectorXd eig(dim);
  for (int i = 0; i < dim; ++i) eig(i) = std::exp(unif(rng) * std::log(max_condition));
  MatrixXd cov = q * eig.asDiagonal() * q.transpose();
  cov = 0.5 * (cov + cov.transpose());
  VectorXd mean(dim);
  for (int i = 0; i < dim; ++i) mean(i) = normal(rng);
  return MvnTarget::make(std::move(mean), std::move(cov));
}

double mvn_coordinate_update(const MvnTarget& target, const VectorXd& first_moments, Index j) {
  const VectorXd dev = first_moments - target.mean;
  const double off = target.precision.row(j).dot(dev) - target.precision(j, j) * dev(j);
  return target.mean(j) - off / target.precision(j, j);
}

MvnProblem::MvnProblem(MvnTarget target) : target_(std::move(target)) {
  for (Index j = 0; j < target_.dim(); ++j) {
    layout_.add("theta[" + std::to_string(j) + "]", expfam::FactorFamily::gaussian_uv(), Partition::Alpha);
  }
}

VectorXd MvnProblem::first_moments(const VectorXd& m) const {
  VectorXd out(target_.dim());
  for (Index j = 0; j < target_.dim(); ++j) out(j) = m(2 * j);
  return out;
}

double MvnProblem::expected_log_posterior(const VectorXd& m) const {
  if (m.size() != layout_.size()) throw DimensionMismatch("MvnProblem: m has wrong size");
  const Index d = target_.dim();
  const MatrixXd& lam = target_.precision;
  const VectorXd dev = first_moments(m) - target_.mean;
  // E[(theta - mu)' Lambda (theta - mu)] under a factorised q.
  double quad = dev.dot(lam * dev);
  for (Index j = 0; j < d; ++j) {
    const double var = m(2 * j + 1) - m(2 * j) * m(2 * j);
    quad += lam(j, j) * var;
  }
  const double log_det_lam = 2.0 * Eigen::LLT<MatrixXd>(lam).matrixLLT().diagonal().array().log().sum();
  return -0.5 * quad - 0.5 * d * kLog2Pi + 0.5 * log_det_lam;
}

HessianMatrix MvnProblem::hessian(const VectorXd& m) const {
  if (m.size() != layout_.size()) throw DimensionMismatch("MvnProblem: m has wrong size");
  HessianMatrix h = HessianMatrix::zeros(layout_, ZzStructure::Zero);
  const Index d = target_.dim();
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (i != j) h.alpha(2 * i, 2 * j) = -target_.precision(i, j);
  return h;
}

expfam::FactorState MvnProblem::update_factor(std::size_t j, const VectorXd& m) const {
  const double mean = mvn_coordinate_update(target_, first_moments(m), static_cast<Index>(j));
  return expfam::FactorState::gaussian_uv(mean, 1.0 / target_.precision(j, j));
}

std::vector<expfam::FactorState> MvnProblem::initial_factors() const {
  std::vector<expfam::FactorState> out;
  for (Index j = 0; j < target_.dim(); ++j) {
    out.push_back(expfam::FactorState::gaussian_uv(0.0, 1.0 / target_.precision(j, j)));
  }
  return out;
}

MvnLrvb mvn_lrvb(const MvnTarget& target, const FitOptions& opts) {
  const MvnProblem problem(target);
  MvnLrvb out;
  out.fit = coordinate_ascent(problem, problem.initial_factors(), opts);
  const BlockDiagonal v = assemble_V(out.fit.factors, problem.layout());
  LrvbOptions lopts;
  lopts.probe_eigenvalues = true;
  out.lrvb = lrvb_full(v, problem.hessian(out.fit.m), problem.layout(), lopts);
  const Index d = target.dim();
  std::vector<Index> first(d);
  for (Index j = 0; j < d; ++j) first[j] = 2 * j;
  out.first_moment_sigma = out.lrvb.sigma_hat(first, first);
  out.first_moment_means = problem.first_moments(out.fit.m);
  return out;
}

}  // namespace lrvb::models
