#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptbd/tensor.hpp"

namespace ptbd {

/// Per-mode block sizes sharing a common block count t. sizes[l][j] is the
/// width of block j on mode l.
class BlockPartition {
 public:
  BlockPartition() = default;

  explicit BlockPartition(std::vector<std::vector<Index>> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("BlockPartition: need at least two modes");
    const std::size_t t = sizes_.front().size();
    if (t == 0) throw std::invalid_argument("BlockPartition: block count must be at least 1");
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
      if (sizes_[l].size() != t) {
        throw std::invalid_argument("BlockPartition: mode " + std::to_string(l) + " has " +
                                    std::to_string(sizes_[l].size()) + " blocks, expected " + std::to_string(t));
      }
      for (Index k : sizes_[l]) {
        if (k < 1) throw std::invalid_argument("BlockPartition: block sizes must be positive");
      }
    }
    offsets_.resize(sizes_.size());
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
      offsets_[l].assign(t + 1, 0);
      for (std::size_t j = 0; j < t; ++j) offsets_[l][j + 1] = offsets_[l][j] + sizes_[l][j];
    }
  }

  /// Same block sizes repeated `t` times on every mode.
  static BlockPartition uniform(const std::vector<Index>& block_dims, std::size_t t) {
    std::vector<std::vector<Index>> sizes;
    for (Index k : block_dims) sizes.emplace_back(t, k);
    return BlockPartition(std::move(sizes));
  }

  /// Parses the "2,2,2,2x3,3,3,3x2,2,2,2" literal: modes separated by 'x',
  /// block sizes within a mode separated by ','.
  static BlockPartition parse(const std::string& text) {
    std::vector<std::vector<Index>> sizes;
    std::stringstream modes(text);
    std::string mode_text;
    while (std::getline(modes, mode_text, 'x')) {
      std::vector<Index> mode_sizes;
      std::stringstream blocks(mode_text);
      std::string item;
      while (std::getline(blocks, item, ',')) {
        std::size_t used = 0;
        long long v = 0;
        try {
          v = std::stoll(item, &used);
        } catch (const std::exception&) {
          throw std::invalid_argument("BlockPartition: bad block size '" + item + "' in '" + text + "'");
        }
        if (used != item.size()) throw std::invalid_argument("BlockPartition: bad block size '" + item + "'");
        mode_sizes.push_back(static_cast<Index>(v));
      }
      sizes.push_back(std::move(mode_sizes));
    }
    return BlockPartition(std::move(sizes));
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
      if (l) out += 'x';
      for (std::size_t j = 0; j < sizes_[l].size(); ++j) {
        if (j) out += ',';
        out += std::to_string(sizes_[l][j]);
      }
    }
    return out;
  }

  std::size_t order() const { return sizes_.size(); }
  std::size_t block_count() const { return sizes_.empty() ? 0 : sizes_.front().size(); }
  Index block_size(std::size_t mode, std::size_t block) const { return sizes_.at(mode).at(block); }
  /// Starting index of `block` on `mode` (prefix sum of earlier block sizes).
  Index offset(std::size_t mode, std::size_t block) const { return offsets_.at(mode).at(block); }
  /// k_l, the total width on `mode`.
  Index total(std::size_t mode) const { return offsets_.at(mode).back(); }
  std::vector<Index> totals() const {
    std::vector<Index> k(order());
    for (std::size_t l = 0; l < order(); ++l) k[l] = total(l);
    return k;
  }
  std::vector<Index> block_dims(std::size_t block) const {
    std::vector<Index> d(order());
    for (std::size_t l = 0; l < order(); ++l) d[l] = block_size(l, block);
    return d;
  }
  std::vector<Index> block_offsets(std::size_t block) const {
    std::vector<Index> d(order());
    for (std::size_t l = 0; l < order(); ++l) d[l] = offset(l, block);
    return d;
  }
  const std::vector<std::vector<Index>>& sizes() const { return sizes_; }

  /// Throws unless k_l <= dims[l] on every mode.
  void check_fits(const std::vector<Index>& dims) const {
    if (dims.size() != order()) {
      throw std::invalid_argument("BlockPartition: tensor order " + std::to_string(dims.size()) +
                                  " does not match partition order " + std::to_string(order()));
    }
    for (std::size_t l = 0; l < order(); ++l) {
      if (total(l) > dims[l]) {
        throw std::invalid_argument("BlockPartition: k on mode " + std::to_string(l) + " is " +
                                    std::to_string(total(l)) + " but dimension is " + std::to_string(dims[l]));
      }
    }
  }

  friend bool operator==(const BlockPartition& a, const BlockPartition& b) { return a.sizes_ == b.sizes_; }

 private:
  std::vector<std::vector<Index>> sizes_;
  std::vector<std::vector<Index>> offsets_;
};

/// One n_l x k_l factor per mode.
template <typename Scalar>
using FactorTuple = std::vector<Matrix<Scalar>>;

template <typename Scalar>
void check_conformable(const std::vector<Index>& dims, const FactorTuple<Scalar>& factors,
                       const BlockPartition& partition) {
  partition.check_fits(dims);
  if (factors.size() != dims.size()) {
    throw std::invalid_argument("factor count " + std::to_string(factors.size()) + " does not match tensor order " +
                                std::to_string(dims.size()));
  }
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (factors[l].rows() != dims[l] || factors[l].cols() != partition.total(l)) {
      throw std::invalid_argument("factor " + std::to_string(l) + " is " + std::to_string(factors[l].rows()) + "x" +
                                  std::to_string(factors[l].cols()) + ", expected " + std::to_string(dims[l]) + "x" +
                                  std::to_string(partition.total(l)));
    }
  }
}

/// Column slice P_{mode, block}.
template <typename Scalar>
Matrix<Scalar> factor_block(const Matrix<Scalar>& p, const BlockPartition& partition, std::size_t mode,
                            std::size_t block) {
  if (mode >= partition.order()) throw std::out_of_range("factor_block: mode out of range");
  if (block >= partition.block_count()) throw std::out_of_range("factor_block: block out of range");
  if (p.cols() != partition.total(mode)) {
    throw std::invalid_argument("factor_block: factor has " + std::to_string(p.cols()) + " columns, partition needs " +
                                std::to_string(partition.total(mode)));
  }
  return p.middleCols(partition.offset(mode, block), partition.block_size(mode, block));
}

/// Diagonal blocks T_{ii...i} of a core tensor whose dims equal the partition totals.
template <typename Scalar>
std::vector<DenseTensor<Scalar>> bdiag_extract(const DenseTensor<Scalar>& t, const BlockPartition& partition) {
  if (t.dims() != partition.totals()) {
    throw std::invalid_argument("bdiag_extract: tensor dims do not match partition totals");
  }
  std::vector<DenseTensor<Scalar>> blocks;
  blocks.reserve(partition.block_count());
  for (std::size_t s = 0; s < partition.block_count(); ++s) {
    blocks.push_back(subtensor(t, partition.block_offsets(s), partition.block_dims(s)));
  }
  return blocks;
}

/// Block-diagonal tensor with the given diagonal blocks and zeros elsewhere.
template <typename Scalar>
DenseTensor<Scalar> bdiag_embed(const std::vector<DenseTensor<Scalar>>& blocks, const BlockPartition& partition) {
  if (blocks.size() != partition.block_count()) {
    throw std::invalid_argument("bdiag_embed: got " + std::to_string(blocks.size()) + " blocks, partition has " +
                                std::to_string(partition.block_count()));
  }
  DenseTensor<Scalar> out(partition.totals());
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    if (blocks[s].dims() != partition.block_dims(s)) {
      throw std::invalid_argument("bdiag_embed: block " + std::to_string(s) + " has the wrong shape");
    }
    assign_subtensor(out, partition.block_offsets(s), blocks[s]);
  }
  return out;
}

template <typename Scalar>
RealOf<Scalar> bdiag_norm_sq(const std::vector<DenseTensor<Scalar>>& blocks) {
  RealOf<Scalar> acc = 0;
  for (const auto& b : blocks) acc += b.vec().squaredNorm();
  return acc;
}

/// T = B x_1 P_1^H ... x_m P_m^H.
template <typename Scalar>
DenseTensor<Scalar> core_tensor(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& factors) {
  if (factors.size() != b.order()) throw std::invalid_argument("core_tensor: factor count does not match order");
  DenseTensor<Scalar> out = b;
  for (std::size_t l = 0; l < factors.size(); ++l) {
    if (factors[l].rows() != b.dim(l)) throw std::invalid_argument("core_tensor: factor " + std::to_string(l) + " row mismatch");
    const Matrix<Scalar> ph = factors[l].adjoint();
    out = mode_multiply(out, ph, l);
  }
  return out;
}

/// Sum over blocks of T_{ii...i} x_1 P_{1i} ... x_m P_{mi}.
template <typename Scalar>
DenseTensor<Scalar> reconstruct(const std::vector<DenseTensor<Scalar>>& blocks, const FactorTuple<Scalar>& factors,
                                const BlockPartition& partition) {
  if (blocks.size() != partition.block_count()) throw std::invalid_argument("reconstruct: block count mismatch");
  if (factors.size() != partition.order()) throw std::invalid_argument("reconstruct: factor count mismatch");
  std::vector<Index> dims(factors.size());
  for (std::size_t l = 0; l < factors.size(); ++l) dims[l] = factors[l].rows();
  check_conformable(dims, factors, partition);

  DenseTensor<Scalar> out(dims);
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    if (blocks[s].dims() != partition.block_dims(s)) {
      throw std::invalid_argument("reconstruct: block " + std::to_string(s) + " has the wrong shape");
    }
    DenseTensor<Scalar> term = blocks[s];
    for (std::size_t l = 0; l < factors.size(); ++l) {
      term = mode_multiply(term, factor_block(factors[l], partition, l, s), l);
    }
    out.vec() += term.vec();
  }
  return out;
}

}  // namespace ptbd
