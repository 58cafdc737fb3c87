#include "lrvb/oracles/finite_diff.hpp"

#include "lrvb/error.hpp"

#include <cmath>

namespace lrvb::oracles {

using Eigen::Index;

namespace {

double second_difference(const ScalarFunction& f, const VectorXd& m, Index i, Index j, double hi, double hj,
                         double f0) {
  VectorXd x = m;
  if (i == j) {
    x(i) = m(i) + hi;
    const double fp = f(x);
    x(i) = m(i) - hi;
    const double fm = f(x);
    return (fp - 2.0 * f0 + fm) / (hi * hi);
  }
  auto at = [&](double si, double sj) {
    x = m;
    x(i) += si * hi;
    x(j) += sj * hj;
    return f(x);
  };
  return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
}

MatrixXd block_once(const ScalarFunction& f, const VectorXd& m, const std::vector<Index>& rows,
                    const std::vector<Index>& cols, double step) {
  const double f0 = f(m);
  MatrixXd out(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      const Index i = rows[a], j = cols[b];
      const double hi = step * std::max(1.0, std::abs(m(i)));
      const double hj = step * std::max(1.0, std::abs(m(j)));
      out(a, b) = second_difference(f, m, i, j, hi, hj, f0);
    }
  }
  return out;
}

}  // namespace

MatrixXd fd_hessian_block(const ScalarFunction& f, const VectorXd& m, const std::vector<Index>& rows,
                          const std::vector<Index>& cols, double step) {
  try {
    return block_once(f, m, rows, cols, step);
  } catch (const DomainError&) {
    return block_once(f, m, rows, cols, step / 10.0);
  }
}

MatrixXd fd_hessian(const ScalarFunction& f, const VectorXd& m, const std::vector<Index>& coords, double step) {
  const MatrixXd h = fd_hessian_block(f, m, coords, coords, step);
  return 0.5 * (h + h.transpose());
}

MatrixXd fd_hessian(const ScalarFunction& f, const VectorXd& m, double step) {
  std::vector<Index> all(m.size());
  for (Index i = 0; i < m.size(); ++i) all[i] = i;
  return fd_hessian(f, m, all, step);
}

}  // namespace lrvb::oracles
