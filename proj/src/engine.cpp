#include "lrvb/engine.hpp"

#include "lrvb/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace lrvb {

namespace {

constexpr double kMinRcond = 1e-14;

double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void check_square(const MatrixXd& m, Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(n) + "x" + std::to_string(n) +
                            ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

// Solves a X = rhs with a pivoted LU and fills in residual / symmetry diagnostics.
MatrixXd solve_outer(const MatrixXd& a, const MatrixXd& rhs, const LrvbOptions& opts, SolveDiagnostics& diag) {
  Eigen::PartialPivLU<MatrixXd> lu(a);
  diag.rcond = lu.rcond();
  if (!(diag.rcond >= kMinRcond)) {
    throw SingularSystem("(I - VH) is numerically singular (rcond " + std::to_string(diag.rcond) + ")");
  }
  MatrixXd x = lu.solve(rhs);
  diag.residual = max_abs(a * x - rhs) / std::max(1.0, max_abs(rhs));
  if (!std::isfinite(diag.residual) || diag.residual > opts.residual_tolerance) {
    throw SingularSystem("LRVB solve residual " + std::to_string(diag.residual) + " exceeds tolerance");
  }
  diag.asymmetry = max_abs(x - x.transpose());
  if (diag.asymmetry > opts.asymmetry_tolerance * std::max(1.0, max_abs(x))) {
    diag.warnings.push_back("Sigma asymmetry " + std::to_string(diag.asymmetry) +
                            " suggests an unconverged MFVB optimum");
  }
  MatrixXd sym = 0.5 * (x + x.transpose());
  if (opts.probe_eigenvalues && sym.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    diag.min_eigenvalue = es.eigenvalues().minCoeff();
    if (*diag.min_eigenvalue < -1e-8) {
      diag.not_positive_definite = true;
      diag.warnings.push_back("NotPositiveDefinite: Sigma has eigenvalue " + std::to_string(*diag.min_eigenvalue));
    }
  }
  return sym;
}

MatrixXd small_block_solve(const MatrixXd& a, const MatrixXd& rhs) {
  Eigen::PartialPivLU<MatrixXd> lu(a);
  if (!(lu.rcond() >= kMinRcond)) throw SingularSystem("inner (I_z - V_z H_z) block is singular");
  return lu.solve(rhs);
}

}  // namespace

const char* zz_structure_name(ZzStructure s) {
  switch (s) {
    case ZzStructure::Zero: return "zero";
    case ZzStructure::Blocks: return "blocks";
    case ZzStructure::Dense: return "dense";
  }
  return "unknown";
}

HessianMatrix HessianMatrix::zeros(const BlockLayout& layout, ZzStructure zz) {
  HessianMatrix h;
  h.alpha = MatrixXd::Zero(layout.alpha_size(), layout.alpha_size());
  h.alpha_z = MatrixXd::Zero(layout.alpha_size(), layout.z_size());
  h.zz_structure = zz;
  if (zz == ZzStructure::Blocks) {
    for (std::size_t j : layout.blocks_in(Partition::Z)) {
      const Index s = layout.block(j).size;
      h.zz_blocks.push_back(MatrixXd::Zero(s, s));
    }
  } else if (zz == ZzStructure::Dense) {
    h.zz_dense = MatrixXd::Zero(layout.z_size(), layout.z_size());
  }
  return h;
}

HessianMatrix HessianMatrix::from_dense(const MatrixXd& h, const BlockLayout& layout) {
  check_square(h, layout.size(), "HessianMatrix::from_dense");
  const auto ai = layout.alpha_indices();
  const auto zi = layout.z_indices();
  HessianMatrix out;
  out.alpha = h(ai, ai);
  out.alpha_z = h(ai, zi);
  const MatrixXd zz = h(zi, zi);
  if (max_abs(zz) == 0.0) {
    out.zz_structure = ZzStructure::Zero;
    return out;
  }
  // Block diagonal iff everything outside the per-factor diagonal blocks vanishes.
  MatrixXd outside = zz;
  std::vector<MatrixXd> blocks;
  for (std::size_t j : layout.blocks_in(Partition::Z)) {
    const Index o = layout.partition_offset(j), s = layout.block(j).size;
    blocks.push_back(zz.block(o, o, s, s));
    outside.block(o, o, s, s).setZero();
  }
  if (max_abs(outside) == 0.0) {
    out.zz_structure = ZzStructure::Blocks;
    out.zz_blocks = std::move(blocks);
  } else {
    out.zz_structure = ZzStructure::Dense;
    out.zz_dense = zz;
  }
  return out;
}

MatrixXd HessianMatrix::zz_to_dense(const BlockLayout& layout) const {
  switch (zz_structure) {
    case ZzStructure::Zero: return MatrixXd::Zero(layout.z_size(), layout.z_size());
    case ZzStructure::Dense: return zz_dense;
    case ZzStructure::Blocks: {
      MatrixXd out = MatrixXd::Zero(layout.z_size(), layout.z_size());
      const auto zb = layout.blocks_in(Partition::Z);
      if (zb.size() != zz_blocks.size()) throw LayoutMismatch("Hessian z blocks do not match layout");
      for (std::size_t i = 0; i < zb.size(); ++i) {
        const Index o = layout.partition_offset(zb[i]);
        out.block(o, o, zz_blocks[i].rows(), zz_blocks[i].cols()) = zz_blocks[i];
      }
      return out;
    }
  }
  return {};
}

MatrixXd HessianMatrix::to_dense(const BlockLayout& layout) const {
  const auto ai = layout.alpha_indices();
  const auto zi = layout.z_indices();
  check_square(alpha, layout.alpha_size(), "HessianMatrix alpha block");
  if (alpha_z.rows() != layout.alpha_size() || alpha_z.cols() != layout.z_size()) {
    throw DimensionMismatch("HessianMatrix alpha_z block shape");
  }
  MatrixXd h = MatrixXd::Zero(layout.size(), layout.size());
  h(ai, ai) = alpha;
  h(ai, zi) = alpha_z;
  h(zi, ai) = alpha_z.transpose();
  h(zi, zi) = zz_to_dense(layout);
  return h;
}

double HessianMatrix::symmetry_defect() const {
  double d = max_abs(alpha - alpha.transpose());
  for (const auto& b : zz_blocks) d = std::max(d, max_abs(b - b.transpose()));
  if (zz_dense.size() > 0) d = std::max(d, max_abs(zz_dense - zz_dense.transpose()));
  return d;
}

MatrixXd IdentityZSolver::solve(const BlockDiagonal&, const HessianMatrix& h, const BlockLayout&,
                                const MatrixXd& rhs) const {
  if (h.zz_structure != ZzStructure::Zero) throw LayoutMismatch("identity z-solver requires H_zz = 0");
  return rhs;
}

MatrixXd BlockZSolver::solve(const BlockDiagonal& v_z, const HessianMatrix& h, const BlockLayout& layout,
                             const MatrixXd& rhs) const {
  if (h.zz_structure == ZzStructure::Zero) return rhs;
  if (h.zz_structure != ZzStructure::Blocks) throw LayoutMismatch("block z-solver requires block-diagonal H_zz");
  if (v_z.blocks().size() != h.zz_blocks.size()) throw LayoutMismatch("V_z and H_zz block counts differ");
  MatrixXd out(rhs.rows(), rhs.cols());
  for (std::size_t j = 0; j < h.zz_blocks.size(); ++j) {
    const MatrixXd& vb = v_z.blocks()[j];
    const MatrixXd& hb = h.zz_blocks[j];
    const Index o = v_z.offsets()[j], s = vb.rows();
    if (hb.rows() != s) throw LayoutMismatch("V_z and H_zz block sizes differ");
    const MatrixXd a = MatrixXd::Identity(s, s) - vb * hb;
    out.middleRows(o, s) = small_block_solve(a, rhs.middleRows(o, s));
  }
  (void)layout;
  return out;
}

MatrixXd DenseZSolver::solve(const BlockDiagonal& v_z, const HessianMatrix& h, const BlockLayout& layout,
                             const MatrixXd& rhs) const {
  const MatrixXd hz = h.zz_to_dense(layout);
  const MatrixXd a = MatrixXd::Identity(hz.rows(), hz.cols()) - v_z.multiply(hz);
  return small_block_solve(a, rhs);
}

std::unique_ptr<ZSolver> make_z_solver(ZzStructure structure) {
  switch (structure) {
    case ZzStructure::Zero: return std::make_unique<IdentityZSolver>();
    case ZzStructure::Blocks: return std::make_unique<BlockZSolver>();
    case ZzStructure::Dense: return std::make_unique<DenseZSolver>();
  }
  return std::make_unique<DenseZSolver>();
}

BlockDiagonal assemble_V(const std::vector<expfam::FactorState>& factors, const BlockLayout& layout) {
  if (factors.size() != layout.num_blocks()) {
    throw LayoutMismatch("assemble_V: " + std::to_string(factors.size()) + " factors for " +
                         std::to_string(layout.num_blocks()) + " layout blocks");
  }
  std::vector<MatrixXd> blocks;
  blocks.reserve(factors.size());
  for (std::size_t j = 0; j < factors.size(); ++j) {
    const FactorBlock& b = layout.block(j);
    if (!(factors[j].family() == b.family) || factors[j].mean().size() != b.size) {
      throw LayoutMismatch("assemble_V: factor " + std::to_string(j) + " (" + factors[j].family().name() +
                           ") does not match layout block '" + b.name + "' (" + b.family.name() + ")");
    }
    blocks.push_back(expfam::covariance_block(factors[j]));
  }
  return BlockDiagonal(std::move(blocks));
}

BlockDiagonal restrict_partition(const BlockDiagonal& v, const BlockLayout& layout, Partition partition) {
  if (v.blocks().size() != layout.num_blocks()) throw LayoutMismatch("V blocks do not match layout");
  std::vector<MatrixXd> out;
  for (std::size_t j : layout.blocks_in(partition)) {
    if (v.blocks()[j].rows() != layout.block(j).size) throw LayoutMismatch("V block size mismatch");
    out.push_back(v.blocks()[j]);
  }
  return BlockDiagonal(std::move(out));
}

LrvbResult lrvb_full(const MatrixXd& v, const MatrixXd& h, const LrvbOptions& opts) {
  const Index n = v.rows();
  check_square(v, n, "lrvb_full V");
  check_square(h, n, "lrvb_full H");
  LrvbResult r;
  const MatrixXd a = MatrixXd::Identity(n, n) - v * h;
  r.sigma_hat = solve_outer(a, v, opts, r.diagnostics);
  r.mfvb_cov = v;
  r.indices.resize(n);
  for (Index i = 0; i < n; ++i) r.indices[i] = i;
  r.diagnostics.z_solver = "none";
  return r;
}

LrvbResult lrvb_full(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                     const LrvbOptions& opts) {
  if (v.size() != layout.size()) throw LayoutMismatch("lrvb_full: V does not match layout");
  LrvbResult r = lrvb_full(v.to_dense(), h.to_dense(layout), opts);
  r.hessian = std::make_shared<HessianMatrix>(h);
  return r;
}

LrvbResult lrvb_schur(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                      const ZSolver& z_solver, const LrvbOptions& opts) {
  const BlockDiagonal v_alpha = restrict_partition(v, layout, Partition::Alpha);
  const BlockDiagonal v_z = restrict_partition(v, layout, Partition::Z);
  const Index na = layout.alpha_size();
  check_square(h.alpha, na, "lrvb_schur H_alpha");
  if (h.alpha_z.rows() != na || h.alpha_z.cols() != layout.z_size()) {
    throw DimensionMismatch("lrvb_schur: H_alpha_z shape");
  }

  // C = (I_z - V_z H_z)^{-1} V_z H_{z alpha}. With H_zz = 0, C = V_z H_{z alpha} and
  // H_{alpha z} C is formed block by block; C itself is only needed for cross covariances.
  const bool identity = dynamic_cast<const IdentityZSolver*>(&z_solver) != nullptr;
  MatrixXd c;
  if (!identity || opts.cross_covariance) {
    c = z_solver.solve(v_z, h, layout, v_z.multiply(h.alpha_z.transpose()));
    if (!c.allFinite()) throw SingularSystem("inner z solve produced non-finite values");
  } else if (h.zz_structure != ZzStructure::Zero) {
    throw LayoutMismatch("identity z-solver requires H_zz = 0");
  }

  MatrixXd coupled = h.alpha;
  if (identity) coupled += v_z.sandwich(h.alpha_z);
  else coupled.noalias() += h.alpha_z * c;
  const MatrixXd a = MatrixXd::Identity(na, na) - v_alpha.multiply(coupled);

  LrvbResult r;
  r.diagnostics.z_solver = z_solver.name();
  r.mfvb_cov = v_alpha.to_dense();
  r.sigma_hat = solve_outer(a, r.mfvb_cov, opts, r.diagnostics);
  r.indices = layout.alpha_indices();
  r.alpha_only = true;
  if (opts.cross_covariance) r.cross_z_alpha = c * r.sigma_hat;
  r.hessian = std::make_shared<HessianMatrix>(h);
  return r;
}

LrvbResult lrvb_schur(const BlockDiagonal& v, const HessianMatrix& h, const BlockLayout& layout,
                      const LrvbOptions& opts) {
  return lrvb_schur(v, h, layout, *make_z_solver(h.zz_structure), opts);
}

VectorXd function_covariance(const LrvbResult& result, const VectorXd& grad_f) {
  if (grad_f.size() != result.sigma_hat.cols()) {
    throw DimensionMismatch("function_covariance: gradient has size " + std::to_string(grad_f.size()) +
                            ", expected " + std::to_string(result.sigma_hat.cols()));
  }
  return result.sigma_hat * grad_f;
}

double function_function_covariance(const LrvbResult& result, const VectorXd& grad_g, const VectorXd& grad_f) {
  if (grad_g.size() != result.sigma_hat.rows()) throw DimensionMismatch("function_function_covariance: grad_g size");
  return grad_g.dot(function_covariance(result, grad_f));
}

}  // namespace lrvb
