#pragma once

#include "lrvb/expfam.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace lrvb {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Which side of the alpha / z split a factor belongs to.
enum class Partition { Alpha, Z };

struct FactorBlock {
  std::string name;
  expfam::FactorFamily family;
  Partition partition = Partition::Alpha;
  Index offset = 0;
  Index size = 0;
};

/// Maps factors to contiguous index ranges of the stacked mean-parameter vector.
class BlockLayout {
 public:
  std::size_t add(std::string name, const expfam::FactorFamily& family, Partition partition);

  const std::vector<FactorBlock>& blocks() const { return blocks_; }
  const FactorBlock& block(std::size_t j) const { return blocks_.at(j); }
  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t find(const std::string& name) const;

  Index size() const { return size_; }
  Index alpha_size() const { return alpha_size_; }
  Index z_size() const { return size_ - alpha_size_; }

  /// Positions in m of alpha (resp. z) coordinates, in layout order.
  std::vector<Index> alpha_indices() const;
  std::vector<Index> z_indices() const;
  /// Offset of block j within its own partition.
  Index partition_offset(std::size_t j) const;
  std::vector<std::size_t> blocks_in(Partition partition) const;

  /// Per-coordinate "block.stat[i]" names.
  std::vector<std::string> coordinate_names() const;

 private:
  std::vector<FactorBlock> blocks_;
  Index size_ = 0;
  Index alpha_size_ = 0;
};

/// Symmetric block-diagonal matrix with dense diagonal blocks.
class BlockDiagonal {
 public:
  BlockDiagonal() = default;
  explicit BlockDiagonal(std::vector<MatrixXd> blocks);

  Index size() const { return size_; }
  const std::vector<MatrixXd>& blocks() const { return blocks_; }
  const std::vector<Index>& offsets() const { return offsets_; }

  MatrixXd to_dense() const;
  /// this * rhs, exploiting the block structure.
  MatrixXd multiply(const MatrixXd& rhs) const;
  /// a * this * a', accumulated block by block without a dense intermediate.
  MatrixXd sandwich(const MatrixXd& a) const;

 private:
  std::vector<MatrixXd> blocks_;
  std::vector<Index> offsets_;
  Index size_ = 0;
};

}  // namespace lrvb
