#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ptbd {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RealOf = typename Eigen::NumTraits<Scalar>::Real;

template <typename Scalar>
inline constexpr bool is_complex_v = Eigen::NumTraits<Scalar>::IsComplex;

enum class Field { real, complex };

template <typename Scalar>
constexpr Field field_of() {
  return is_complex_v<Scalar> ? Field::complex : Field::real;
}

inline Index product(const std::vector<Index>& dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>{});
}

/// Dense m-mode tensor stored as one flat buffer in colexicographic order:
/// the first subscript varies fastest, so entry (i_1, ..., i_m) lives at
/// i_1 + n_1 * (i_2 + n_2 * (... + n_{m-1} * i_m)).
template <typename Scalar>
class DenseTensor {
 public:
  using value_type = Scalar;

  DenseTensor() = default;

  explicit DenseTensor(std::vector<Index> dims) : dims_(std::move(dims)) {
    validate_dims();
    data_.assign(static_cast<std::size_t>(product(dims_)), Scalar(0));
  }

  DenseTensor(std::vector<Index> dims, std::vector<Scalar> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims();
    if (static_cast<Index>(data_.size()) != product(dims_)) {
      throw std::invalid_argument("DenseTensor: buffer length " + std::to_string(data_.size()) +
                                  " does not match product of dims " +
                                  std::to_string(product(dims_)));
    }
  }

  static DenseTensor zeros(std::vector<Index> dims) { return DenseTensor(std::move(dims)); }

  std::size_t order() const { return dims_.size(); }
  const std::vector<Index>& dims() const { return dims_; }
  Index dim(std::size_t mode) const { return dims_.at(mode); }
  Index size() const { return static_cast<Index>(data_.size()); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& buffer() { return data_; }
  const std::vector<Scalar>& buffer() const { return data_; }

  Scalar& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }
  const Scalar& operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }

  Index flat_index(const std::vector<Index>& subscripts) const {
    if (subscripts.size() != dims_.size()) {
      throw std::invalid_argument("DenseTensor: subscript count does not match order");
    }
    Index flat = 0;
    for (std::size_t l = dims_.size(); l-- > 0;) {
      if (subscripts[l] < 0 || subscripts[l] >= dims_[l]) {
        throw std::out_of_range("DenseTensor: subscript out of range");
      }
      flat = flat * dims_[l] + subscripts[l];
    }
    return flat;
  }

  std::vector<Index> subscripts(Index flat) const {
    if (flat < 0 || flat >= size()) throw std::out_of_range("DenseTensor: flat index out of range");
    std::vector<Index> sub(dims_.size());
    for (std::size_t l = 0; l < dims_.size(); ++l) {
      sub[l] = flat % dims_[l];
      flat /= dims_[l];
    }
    return sub;
  }

  Scalar& operator()(const std::vector<Index>& subscripts) { return data_[static_cast<std::size_t>(flat_index(subscripts))]; }
  const Scalar& operator()(const std::vector<Index>& subscripts) const {
    return data_[static_cast<std::size_t>(flat_index(subscripts))];
  }

  /// Flat buffer viewed as an Eigen column vector.
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> vec() { return {data_.data(), size()}; }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> vec() const { return {data_.data(), size()}; }

  /// Product of the dimensions strictly before / after `mode`.
  Index stride_before(std::size_t mode) const {
    return product({dims_.begin(), dims_.begin() + static_cast<std::ptrdiff_t>(mode)});
  }
  Index stride_after(std::size_t mode) const {
    return product({dims_.begin() + static_cast<std::ptrdiff_t>(mode) + 1, dims_.end()});
  }

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  void validate_dims() const {
    if (dims_.size() < 2) throw std::invalid_argument("DenseTensor: order must be at least 2");
    for (Index n : dims_) {
      if (n < 1) throw std::invalid_argument("DenseTensor: dimensions must be positive");
    }
  }

  std::vector<Index> dims_;
  std::vector<Scalar> data_;
};

namespace detail {

inline void check_mode(std::size_t mode, std::size_t order) {
  if (mode >= order) {
    throw std::out_of_range("mode " + std::to_string(mode) + " out of range for order " +
                            std::to_string(order));
  }
}

template <typename To, typename From>
Matrix<To> promote(const Matrix<From>& x) {
  if constexpr (std::is_same_v<To, From>) {
    return x;
  } else {
    static_assert(is_complex_v<To> && !is_complex_v<From>, "only real -> complex promotion is supported");
    return x.template cast<To>();
  }
}

}  // namespace detail

template <typename Scalar>
RealOf<Scalar> frobenius_norm(const DenseTensor<Scalar>& b) {
  return b.vec().norm();
}

/// Mode-`mode` unfolding (0-based). Row i holds the entries with subscript i
/// on `mode`; columns run colexicographically over the remaining subscripts.
template <typename Scalar>
Matrix<Scalar> unfold(const DenseTensor<Scalar>& b, std::size_t mode) {
  detail::check_mode(mode, b.order());
  const Index left = b.stride_before(mode);
  const Index n = b.dim(mode);
  const Index right = b.stride_after(mode);
  Matrix<Scalar> out(n, left * right);
  const Scalar* src = b.data();
  for (Index c = 0; c < right; ++c) {
    for (Index i = 0; i < n; ++i) {
      const Scalar* fiber = src + left * (i + n * c);
      for (Index a = 0; a < left; ++a) out(i, a + left * c) = fiber[a];
    }
  }
  return out;
}

/// Inverse of unfold: rebuilds a tensor of shape `dims` from its mode-`mode` unfolding.
template <typename Scalar>
DenseTensor<Scalar> fold(const Matrix<Scalar>& unfolded, std::size_t mode, std::vector<Index> dims) {
  DenseTensor<Scalar> out(std::move(dims));
  detail::check_mode(mode, out.order());
  const Index left = out.stride_before(mode);
  const Index n = out.dim(mode);
  const Index right = out.stride_after(mode);
  if (unfolded.rows() != n || unfolded.cols() != left * right) {
    throw std::invalid_argument("fold: matrix shape does not match target dims");
  }
  Scalar* dst = out.data();
  for (Index c = 0; c < right; ++c) {
    for (Index i = 0; i < n; ++i) {
      Scalar* fiber = dst + left * (i + n * c);
      for (Index a = 0; a < left; ++a) fiber[a] = unfolded(i, a + left * c);
    }
  }
  return out;
}

/// B x_mode X: contracts the columns of X against subscript `mode` of B.
/// A real X applied to a complex tensor is promoted.
template <typename Scalar, typename XScalar>
DenseTensor<Scalar> mode_multiply(const DenseTensor<Scalar>& b, const Matrix<XScalar>& x_in, std::size_t mode) {
  detail::check_mode(mode, b.order());
  const Index n = b.dim(mode);
  if (x_in.cols() != n) {
    throw std::invalid_argument("mode_multiply: matrix has " + std::to_string(x_in.cols()) +
                                " columns, mode " + std::to_string(mode) + " has dimension " +
                                std::to_string(n));
  }
  const Matrix<Scalar> x = detail::promote<Scalar>(x_in);
  const Index k = x.rows();
  const Index left = b.stride_before(mode);
  const Index right = b.stride_after(mode);

  std::vector<Index> dims = b.dims();
  dims[mode] = k;
  DenseTensor<Scalar> out(std::move(dims));
  if (k == 0) return out;

  using ConstMap = Eigen::Map<const Matrix<Scalar>>;
  using MutMap = Eigen::Map<Matrix<Scalar>>;
  if (left == 1) {
    ConstMap src(b.data(), n, right);
    MutMap dst(out.data(), k, right);
    dst.noalias() = x * src;
  } else {
    for (Index c = 0; c < right; ++c) {
      ConstMap src(b.data() + left * n * c, left, n);
      MutMap dst(out.data() + left * k * c, left, k);
      dst.noalias() = src * x.transpose();
    }
  }
  return out;
}

template <typename XScalar>
struct ModeFactor {
  Matrix<XScalar> matrix;
  std::size_t mode;
};

/// Applies mode_multiply for each (matrix, mode) pair in turn. Modes must be distinct.
template <typename Scalar, typename XScalar>
DenseTensor<Scalar> multi_mode_multiply(const DenseTensor<Scalar>& b, const std::vector<ModeFactor<XScalar>>& factors) {
  std::vector<bool> seen(b.order(), false);
  for (const auto& f : factors) {
    detail::check_mode(f.mode, b.order());
    if (seen[f.mode]) throw std::invalid_argument("multi_mode_multiply: duplicate mode " + std::to_string(f.mode));
    seen[f.mode] = true;
  }
  DenseTensor<Scalar> out = b;
  for (const auto& f : factors) out = mode_multiply(out, f.matrix, f.mode);
  return out;
}

/// Copies the sub-tensor with per-mode index ranges [offset, offset + extent).
template <typename Scalar>
DenseTensor<Scalar> subtensor(const DenseTensor<Scalar>& b, const std::vector<Index>& offsets,
                              const std::vector<Index>& extents) {
  const std::size_t m = b.order();
  if (offsets.size() != m || extents.size() != m) {
    throw std::invalid_argument("subtensor: range count does not match order");
  }
  for (std::size_t l = 0; l < m; ++l) {
    if (offsets[l] < 0 || extents[l] < 1 || offsets[l] + extents[l] > b.dim(l)) {
      throw std::out_of_range("subtensor: range exceeds dimension on mode " + std::to_string(l));
    }
  }
  DenseTensor<Scalar> out(extents);
  std::vector<Index> sub(m, 0);
  const Index inner = extents[0];
  const Index count = out.size() / inner;
  for (Index blockcol = 0; blockcol < count; ++blockcol) {
    Index rem = blockcol;
    Index src = 0;
    Index stride = b.dim(0);
    for (std::size_t l = 1; l < m; ++l) {
      sub[l] = rem % extents[l];
      rem /= extents[l];
    }
    for (std::size_t l = m; l-- > 1;) {
      src = src * b.dim(l) + offsets[l] + sub[l];
    }
    src = src * stride + offsets[0];
    std::copy_n(b.data() + src, inner, out.data() + blockcol * inner);
  }
  return out;
}

/// Writes `block` into `target` starting at per-mode `offsets`.
template <typename Scalar>
void assign_subtensor(DenseTensor<Scalar>& target, const std::vector<Index>& offsets, const DenseTensor<Scalar>& block) {
  const std::size_t m = target.order();
  if (offsets.size() != m || block.order() != m) {
    throw std::invalid_argument("assign_subtensor: order mismatch");
  }
  for (std::size_t l = 0; l < m; ++l) {
    if (offsets[l] < 0 || offsets[l] + block.dim(l) > target.dim(l)) {
      throw std::out_of_range("assign_subtensor: block exceeds target on mode " + std::to_string(l));
    }
  }
  std::vector<Index> sub(m, 0);
  const Index inner = block.dim(0);
  const Index count = block.size() / inner;
  for (Index blockcol = 0; blockcol < count; ++blockcol) {
    Index rem = blockcol;
    for (std::size_t l = 1; l < m; ++l) {
      sub[l] = rem % block.dim(l);
      rem /= block.dim(l);
    }
    Index dst = 0;
    for (std::size_t l = m; l-- > 1;) dst = dst * target.dim(l) + offsets[l] + sub[l];
    dst = dst * target.dim(0) + offsets[0];
    std::copy_n(block.data() + blockcol * inner, inner, target.data() + dst);
  }
}

}  // namespace ptbd
