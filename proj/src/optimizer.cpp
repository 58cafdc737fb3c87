#include "lrvb/optimizer.hpp"

#include "lrvb/error.hpp"

#include <cmath>
#include <numeric>

namespace lrvb {

namespace {

double relative_change(const VectorXd& before, const VectorXd& after) {
  return ((after - before).array().abs() / (1.0 + before.array().abs())).maxCoeff();
}

void validate_order(const std::vector<std::size_t>& order, const BlockLayout& layout) {
  std::vector<int> seen(layout.num_blocks(), 0);
  for (std::size_t j : order) {
    if (j >= layout.num_blocks()) throw LayoutMismatch("update order references unknown factor");
    ++seen[j];
  }
  for (int s : seen)
    if (s != 1) throw LayoutMismatch("update order must visit every factor exactly once");
}

}  // namespace

std::vector<std::size_t> ModelProblem::default_order() const {
  std::vector<std::size_t> order;
  const auto& blocks = layout().blocks();
  for (std::size_t j = 0; j < blocks.size(); ++j)
    if (blocks[j].partition == Partition::Alpha) order.push_back(j);
  for (std::size_t j = 0; j < blocks.size(); ++j)
    if (blocks[j].partition == Partition::Z) order.push_back(j);
  return order;
}

VectorXd stack_means(const std::vector<expfam::FactorState>& factors, const BlockLayout& layout) {
  if (factors.size() != layout.num_blocks()) throw LayoutMismatch("stack_means: factor count mismatch");
  VectorXd m(layout.size());
  for (std::size_t j = 0; j < factors.size(); ++j) {
    const FactorBlock& b = layout.block(j);
    if (!(factors[j].family() == b.family)) throw LayoutMismatch("stack_means: family mismatch at " + b.name);
    m.segment(b.offset, b.size) = factors[j].mean();
  }
  return m;
}

std::vector<expfam::FactorState> unstack_means(const VectorXd& m, const BlockLayout& layout) {
  if (m.size() != layout.size()) throw DimensionMismatch("unstack_means: m has wrong size");
  std::vector<expfam::FactorState> out;
  out.reserve(layout.num_blocks());
  for (const auto& b : layout.blocks()) {
    const VectorXd seg = m.segment(b.offset, b.size);
    if (b.family.kind == expfam::FamilyKind::Multinoulli) {
      out.push_back(expfam::FactorState::multinoulli(seg));
    } else {
      out.push_back(expfam::FactorState::from_mean(b.family, seg));
    }
  }
  return out;
}

double elbo(const ModelProblem& problem, const std::vector<expfam::FactorState>& factors) {
  double s = 0.0;
  for (const auto& f : factors) s += expfam::entropy(f);
  return problem.expected_log_posterior(stack_means(factors, problem.layout())) + s;
}

double elbo(const ModelProblem& problem, const VectorXd& m) {
  return elbo(problem, unstack_means(m, problem.layout()));
}

void sweep(const ModelProblem& problem, std::vector<expfam::FactorState>& factors, VectorXd& m,
           const std::vector<std::size_t>& order) {
  const BlockLayout& layout = problem.layout();
  for (std::size_t j : order) {
    expfam::FactorState next = problem.update_factor(j, m);
    const FactorBlock& b = layout.block(j);
    if (!(next.family() == b.family)) throw LayoutMismatch("update returned wrong family for " + b.name);
    if (!next.mean().allFinite()) throw DomainError("update left the admissible region for " + b.name);
    m.segment(b.offset, b.size) = next.mean();
    factors[j] = std::move(next);
  }
}

double check_fixed_point(const ModelProblem& problem, const VectorXd& m,
                         const std::optional<std::vector<std::size_t>>& order) {
  auto factors = unstack_means(m, problem.layout());
  VectorXd next = m;
  const auto ord = order.value_or(problem.default_order());
  validate_order(ord, problem.layout());
  sweep(problem, factors, next, ord);
  return relative_change(m, next);
}

FitResult coordinate_ascent(const ModelProblem& problem, std::vector<expfam::FactorState> init,
                            const FitOptions& opts) {
  if (!(opts.tol > 0.0)) throw ConfigError("coordinate_ascent: tol must be positive");
  if (opts.max_sweeps < 1) throw ConfigError("coordinate_ascent: max_sweeps must be >= 1");
  const auto order = opts.order.value_or(problem.default_order());
  validate_order(order, problem.layout());

  FitResult out;
  out.factors = std::move(init);
  out.m = stack_means(out.factors, problem.layout());
  double prev_elbo = elbo(problem, out.factors);
  for (int s = 0; s < opts.max_sweeps; ++s) {
    const VectorXd before = out.m;
    sweep(problem, out.factors, out.m, order);
    const double e = elbo(problem, out.factors);
    const double change = relative_change(before, out.m);
    out.trace.elbo.push_back(e);
    out.trace.max_change.push_back(change);
    out.trace.sweeps = s + 1;
    const double decrease = prev_elbo - e;
    if (decrease > out.trace.max_elbo_decrease) out.trace.max_elbo_decrease = decrease;
    if (decrease > opts.monotone_slack * std::max(1.0, std::abs(e))) ++out.trace.monotonicity_violations;
    prev_elbo = e;
    if (change <= opts.tol) {
      out.trace.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace lrvb
