#pragma once

// Brute-force reference implementations used as independent oracles. They
// walk subscripts explicitly instead of relying on the library's stride
// arithmetic or Eigen maps.

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "ptbd/ptbd.hpp"

namespace oracle {

using ptbd::DenseTensor;
using ptbd::Index;
using ptbd::Matrix;

inline DenseTensor<double> iota_tensor(std::vector<Index> dims, double start = 1.0) {
  DenseTensor<double> t(std::move(dims));
  for (Index i = 0; i < t.size(); ++i) t[i] = start + double(i);
  return t;
}

// Advances a colexicographic odometer; returns false after the last subscript.
inline bool next_subscript(std::vector<Index>& sub, const std::vector<Index>& dims) {
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (++sub[l] < dims[l]) return true;
    sub[l] = 0;
  }
  return false;
}

template <typename Scalar>
Matrix<Scalar> unfold(const DenseTensor<Scalar>& b, std::size_t mode) {
  const Index n = b.dim(mode);
  Matrix<Scalar> out(n, b.size() / n);
  std::vector<Index> sub(b.order(), 0);
  do {
    Index col = 0, stride = 1;
    for (std::size_t l = 0; l < b.order(); ++l) {
      if (l == mode) continue;
      col += sub[l] * stride;
      stride *= b.dim(l);
    }
    out(sub[mode], col) = b(sub);
  } while (next_subscript(sub, b.dims()));
  return out;
}

// (B x_mode X)_{..i..} = sum_j x_{ij} b_{..j..}
template <typename Scalar, typename XScalar>
DenseTensor<Scalar> mode_multiply(const DenseTensor<Scalar>& b, const Matrix<XScalar>& x, std::size_t mode) {
  std::vector<Index> dims = b.dims();
  dims[mode] = x.rows();
  DenseTensor<Scalar> out(dims);
  std::vector<Index> sub(dims.size(), 0);
  do {
    Scalar acc(0);
    std::vector<Index> src = sub;
    for (Index j = 0; j < b.dim(mode); ++j) {
      src[mode] = j;
      acc += Scalar(x(sub[mode], j)) * b(src);
    }
    out(sub) = acc;
  } while (next_subscript(sub, dims));
  return out;
}

template <typename Scalar>
double max_abs_diff(const DenseTensor<Scalar>& a, const DenseTensor<Scalar>& b) {
  double m = 0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

template <typename Scalar>
double rel_diff(const DenseTensor<Scalar>& a, const DenseTensor<Scalar>& b) {
  const double nb = b.vec().norm();
  const double d = (a.vec() - b.vec()).norm();
  return nb > 0 ? d / nb : d;
}

template <typename Derived1, typename Derived2>
double rel_diff(const Eigen::MatrixBase<Derived1>& a, const Eigen::MatrixBase<Derived2>& b) {
  const double nb = b.norm();
  const double d = (a - b).norm();
  return nb > 0 ? d / nb : d;
}

inline double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s > 0 ? std::abs(a - b) / s : 0.0;
}

// Objective by explicit loops over every block and every entry of the block.
template <typename Scalar>
double objective(const DenseTensor<Scalar>& b, const std::vector<Matrix<Scalar>>& p,
                 const ptbd::BlockPartition& part) {
  double f = 0;
  for (std::size_t s = 0; s < part.block_count(); ++s) {
    DenseTensor<Scalar> t = b;
    for (std::size_t l = 0; l < b.order(); ++l) {
      const Matrix<Scalar> blk = p[l].middleCols(part.offset(l, s), part.block_size(l, s)).adjoint();
      t = oracle::mode_multiply(t, blk, l);
    }
    for (Index i = 0; i < t.size(); ++i) f += std::norm(t[i]);
  }
  return f;
}

}  // namespace oracle
