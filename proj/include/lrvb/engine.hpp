#pragma once

// Linear response covariance: given the block-diagonal MFVB covariance V of the
// sufficient statistics and the Hessian H of the expected log posterior L(m),
// the corrected covariance is  Sigma = (I - V H)^{-1} V.

#include "lrvb/expfam.hpp"
#include "lrvb/layout.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lrvb {

enum class ZzStructure { Zero, Blocks, Dense };

const char* zz_structure_name(ZzStructure s);

/// Hessian of L stored by alpha / z partition. The z-z part is either zero,
/// one dense block per z factor, or a dense fallback.
struct HessianMatrix {
  MatrixXd alpha;    // alpha x alpha
  MatrixXd alpha_z;  // alpha x z
  ZzStructure zz_structure = ZzStructure::Zero;
  std::vector<MatrixXd> zz_blocks;  // one per z factor when zz_structure == Blocks
  MatrixXd zz_dense;                // when zz_structure == Dense

  /// Zero-initialised storage matching the layout.
  static HessianMatrix zeros(const BlockLayout& layout, ZzStructure zz);
  /// Splits a dense Hessian and picks the narrowest z-z structure that represents it exactly.
  static HessianMatrix from_dense(const MatrixXd& h, const BlockLayout& layout);

  MatrixXd to_dense(const BlockLayout& layout) const;
  /// z-z part as a dense matrix.
  MatrixXd zz_to_dense(const BlockLayout& layout) const;
  double symmetry_defect() const;
};

/// Solves (I_z - V_z H_z) X = rhs.
class ZSolver {
 public:
  virtual ~ZSolver() = default;
  virtual MatrixXd solve(const BlockDiagonal& v_z, const HessianMatrix& h, const BlockLayout& layout,
                         const MatrixXd& rhs) const = 0;
  virtual const char* name() const = 0;
};

/// H_z = 0: the inner system is the identity.
class IdentityZSolver final : public ZSolver {
 public:
  MatrixXd solve(const BlockDiagonal&, const HessianMatrix& h, const BlockLayout& layout,
                 const MatrixXd& rhs) const override;
  const char* name() const override { return "identity"; }
};

/// H_z block diagonal, aligned with the z factors: each small block is factored independently.
class BlockZSolver final : public ZSolver {
 public:
  MatrixXd solve(const BlockDiagonal& v_z, const HessianMatrix& h, const BlockLayout& layout,
                 const MatrixXd& rhs) const override;
  const char* name() const override { return "blocks"; }
};

class DenseZSolver final : public ZSolver {
 public:
  MatrixXd solve(const BlockDiagonal& v_z, const HessianMatrix& h, const BlockLayout& layout,
                 const MatrixXd& rhs) const override;
  const char* name() const override { return "dense"; }
};

std::unique_ptr<ZSolver> make_z_solver(ZzStructure structure);

struct SolveDiagnostics {
  double residual = 0.0;     // max-abs residual of the outer solve, relative to max(1, |V|_inf)
  double asymmetry = 0.0;    // max-abs of X - X' before symmetrisation
  double rcond = 0.0;        // reciprocal condition estimate of the outer system
  std::optional<double> min_eigenvalue;
  bool not_positive_definite = false;
  std::string z_solver;
  std::vector<std::string> warnings;
};

struct LrvbOptions {
  bool probe_eigenvalues = false;
  /// Also return Cov(z, alpha) from the Schur path.
  bool cross_covariance = false;
  double residual_tolerance = 1e-6;
  double asymmetry_tolerance = 1e-6;
};

struct LrvbResult {
  MatrixXd sigma_hat;                   // symmetric, over `indices`
  MatrixXd mfvb_cov;                    // V restricted to `indices`
  std::vector<Index> indices;           // coordinates of m covered by sigma_hat
  bool alpha_only = false;
  std::optional<MatrixXd> cross_z_alpha;  // Cov(z, alpha), z x alpha
  std::shared_ptr<const HessianMatrix> hessian;
  SolveDiagnostics diagnostics;
};

BlockDiagonal assemble_V(const std::vector<expfam::FactorState>& factors, const BlockLayout& layout);

/// Full system (I - V H) X = V, solved with a pivoted LU.
LrvbResult lrvb_full(const MatrixXd& v, const MatrixXd& h, const LrvbOptions& opts = {});
LrvbResult lrvb_full(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                     const LrvbOptions& opts = {});

/// Alpha block via the Schur complement over z.
LrvbResult lrvb_schur(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                      const ZSolver& z_solver, const LrvbOptions& opts = {});
LrvbResult lrvb_schur(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                      const LrvbOptions& opts = {});

/// Cov(theta, phi) = Sigma grad f.
VectorXd function_covariance(const LrvbResult& result, const VectorXd& grad_f);
/// Cov(gamma, phi) = grad g' Sigma grad f.
double function_function_covariance(const LrvbResult& result, const VectorXd& grad_g, const VectorXd& grad_f);

/// Restrict a block-diagonal V to one partition.
BlockDiagonal restrict_partition(const BlockDiagonal& v, const BlockLayout& layout, Partition partition);

}  // namespace lrvb
