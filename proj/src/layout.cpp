#include "lrvb/layout.hpp"

#include "lrvb/error.hpp"

namespace lrvb {

std::size_t BlockLayout::add(std::string name, const expfam::FactorFamily& family, Partition partition) {
  family.validate();
  FactorBlock b{std::move(name), family, partition, size_, family.num_stats()};
  size_ += b.size;
  if (partition == Partition::Alpha) alpha_size_ += b.size;
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

std::size_t BlockLayout::find(const std::string& name) const {
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    if (blocks_[j].name == name) return j;
  }
  throw LayoutMismatch("no factor named '" + name + "'");
}

std::vector<Index> BlockLayout::alpha_indices() const {
  std::vector<Index> out;
  out.reserve(alpha_size_);
  for (const auto& b : blocks_)
    if (b.partition == Partition::Alpha)
      for (Index i = 0; i < b.size; ++i) out.push_back(b.offset + i);
  return out;
}

std::vector<Index> BlockLayout::z_indices() const {
  std::vector<Index> out;
  out.reserve(z_size());
  for (const auto& b : blocks_)
    if (b.partition == Partition::Z)
      for (Index i = 0; i < b.size; ++i) out.push_back(b.offset + i);
  return out;
}

Index BlockLayout::partition_offset(std::size_t j) const {
  Index off = 0;
  for (std::size_t i = 0; i < j; ++i)
    if (blocks_[i].partition == blocks_.at(j).partition) off += blocks_[i].size;
  return off;
}

std::vector<std::size_t> BlockLayout::blocks_in(Partition partition) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < blocks_.size(); ++j)
    if (blocks_[j].partition == partition) out.push_back(j);
  return out;
}

std::vector<std::string> BlockLayout::coordinate_names() const {
  std::vector<std::string> out;
  out.reserve(size_);
  for (const auto& b : blocks_) {
    for (const auto& slot : expfam::stat_layout(b.family)) {
      for (Index i = 0; i < slot.size; ++i) {
        std::string n = b.name + "." + slot.name;
        if (slot.size > 1) n += "[" + std::to_string(i) + "]";
        out.push_back(std::move(n));
      }
    }
  }
  return out;
}

BlockDiagonal::BlockDiagonal(std::vector<MatrixXd> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    if (b.rows() != b.cols()) throw DimensionMismatch("BlockDiagonal: non-square block");
    offsets_.push_back(size_);
    size_ += b.rows();
  }
}

MatrixXd BlockDiagonal::to_dense() const {
  MatrixXd out = MatrixXd::Zero(size_, size_);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    out.block(offsets_[j], offsets_[j], blocks_[j].rows(), blocks_[j].cols()) = blocks_[j];
  }
  return out;
}

MatrixXd BlockDiagonal::multiply(const MatrixXd& rhs) const {
  if (rhs.rows() != size_) throw DimensionMismatch("BlockDiagonal::multiply: row mismatch");
  MatrixXd out(size_, rhs.cols());
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const Index n = blocks_[j].rows();
    out.middleRows(offsets_[j], n).noalias() = blocks_[j] * rhs.middleRows(offsets_[j], n);
  }
  return out;
}

MatrixXd BlockDiagonal::sandwich(const MatrixXd& a) const {
  if (a.cols() != size_) throw DimensionMismatch("BlockDiagonal::sandwich: column mismatch");
  MatrixXd out = MatrixXd::Zero(a.rows(), a.rows());
  MatrixXd tmp(a.rows(), 0);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const Index n = blocks_[j].rows();
    if (tmp.cols() < n) tmp.resize(a.rows(), n);
    const auto cols = a.middleCols(offsets_[j], n);
    tmp.leftCols(n).noalias() = cols * blocks_[j];
    out.noalias() += tmp.leftCols(n) * cols.transpose();
  }
  return out;
}

}  // namespace lrvb
