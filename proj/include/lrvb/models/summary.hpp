#pragma once

#include "lrvb/engine.hpp"

#include <string>
#include <vector>

namespace lrvb::models {

/// Posterior mean and the two standard deviation estimates for one scalar parameter.
struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double mfvb_sd = 0.0;
  double lrvb_sd = 0.0;
};

/// Summary of coordinate `coord` of m, where `pos` is its row in result.sigma_hat.
ParamSummary summarize(const std::string& name, const VectorXd& m, const LrvbResult& result, Index coord,
                       Index pos);

/// Row of `coord` within result.indices; throws LayoutMismatch if absent.
Index result_position(const LrvbResult& result, Index coord);

}  // namespace lrvb::models
