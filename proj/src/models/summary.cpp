#include "lrvb/models/summary.hpp"

#include "lrvb/error.hpp"

#include <algorithm>
#include <cmath>

namespace lrvb::models {

Index result_position(const LrvbResult& result, Index coord) {
  const auto it = std::find(result.indices.begin(), result.indices.end(), coord);
  if (it == result.indices.end()) throw LayoutMismatch("coordinate " + std::to_string(coord) + " not in result");
  return static_cast<Index>(it - result.indices.begin());
}

ParamSummary summarize(const std::string& name, const VectorXd& m, const LrvbResult& result, Index coord,
                       Index pos) {
  ParamSummary s;
  s.name = name;
  s.mean = m(coord);
  s.mfvb_sd = std::sqrt(std::max(0.0, result.mfvb_cov(pos, pos)));
  s.lrvb_sd = std::sqrt(std::max(0.0, result.sigma_hat(pos, pos)));
  return s;
}

}  // namespace lrvb::models
