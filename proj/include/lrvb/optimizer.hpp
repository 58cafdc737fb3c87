#pragma once

#include "lrvb/engine.hpp"
#include "lrvb/expfam.hpp"
#include "lrvb/layout.hpp"

#include <optional>
#include <vector>

namespace lrvb {

/// A model ready for coordinate ascent: expected log posterior L(m), its
/// Hessian, and a coordinate maximiser per factor.
class ModelProblem {
 public:
  virtual ~ModelProblem() = default;

  virtual const BlockLayout& layout() const = 0;

  /// L(m) = E_q[log p(theta, x)] up to a model-declared additive constant.
  /// Throws DomainError when m is outside the admissible region.
  virtual double expected_log_posterior(const VectorXd& m) const = 0;

  virtual HessianMatrix hessian(const VectorXd& m) const = 0;

  /// Maximiser of the ELBO over factor j with all other factors held at m.
  virtual expfam::FactorState update_factor(std::size_t j, const VectorXd& m) const = 0;

  /// Global factors first, then local ones.
  virtual std::vector<std::size_t> default_order() const;

  /// True when every update is an exact conjugate coordinate maximiser.
  virtual bool exact_updates() const { return true; }
};

/// Stack the factors' mean parameters in layout order.
VectorXd stack_means(const std::vector<expfam::FactorState>& factors, const BlockLayout& layout);
/// Recover factor states from a stacked m (root-finds where needed).
std::vector<expfam::FactorState> unstack_means(const VectorXd& m, const BlockLayout& layout);

struct FitOptions {
  double tol = 1e-9;
  int max_sweeps = 10000;
  std::optional<std::vector<std::size_t>> order;
  /// Allowed ELBO decrease per sweep before it is recorded as a violation.
  double monotone_slack = 1e-9;
};

struct FitTrace {
  std::vector<double> elbo;
  std::vector<double> max_change;
  int sweeps = 0;
  bool converged = false;
  double max_elbo_decrease = 0.0;
  int monotonicity_violations = 0;
};

struct FitResult {
  std::vector<expfam::FactorState> factors;
  VectorXd m;
  FitTrace trace;
};

double elbo(const ModelProblem& problem, const std::vector<expfam::FactorState>& factors);
double elbo(const ModelProblem& problem, const VectorXd& m);

/// One Gauss-Seidel sweep over `order`, updating `factors` and `m` in place.
void sweep(const ModelProblem& problem, std::vector<expfam::FactorState>& factors, VectorXd& m,
           const std::vector<std::size_t>& order);

/// Relative change max |M(m) - m| / (1 + |m|) produced by one sweep at m.
double check_fixed_point(const ModelProblem& problem, const VectorXd& m,
                         const std::optional<std::vector<std::size_t>>& order = std::nullopt);

/// Runs sweeps until the fixed-point residual drops below opts.tol. When
/// max_sweeps is hit the last iterate is returned with converged = false.
FitResult coordinate_ascent(const ModelProblem& problem, std::vector<expfam::FactorState> init,
                            const FitOptions& opts = {});

}  // namespace lrvb
