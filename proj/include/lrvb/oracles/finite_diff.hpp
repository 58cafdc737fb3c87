#pragma once

#include <Eigen/Dense>

#include <functional>

namespace lrvb::oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using ScalarFunction = std::function<double(const VectorXd&)>;

/// Central second differences with per-coordinate step h * max(1, |m_i|),
/// symmetrised. If a stencil point throws DomainError the step is shrunk by
/// 10x and the whole evaluation retried once.
MatrixXd fd_hessian(const ScalarFunction& f, const VectorXd& m, double step = 1e-4);

/// Same, restricted to the listed coordinates (rows and columns).
MatrixXd fd_hessian(const ScalarFunction& f, const VectorXd& m, const std::vector<Eigen::Index>& coords,
                    double step = 1e-4);

/// Rows `rows`, columns `cols` of the Hessian (mixed partials only).
MatrixXd fd_hessian_block(const ScalarFunction& f, const VectorXd& m, const std::vector<Eigen::Index>& rows,
                          const std::vector<Eigen::Index>& cols, double step = 1e-4);

}  // namespace lrvb::oracles
