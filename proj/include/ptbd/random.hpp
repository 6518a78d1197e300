#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

#include "ptbd/block_structure.hpp"
#include "ptbd/matrix_kernels.hpp"
#include "ptbd/tensor.hpp"

namespace ptbd {

/// Seedable portable generator: std::mt19937_64 (output sequence fixed by
/// the standard) with explicit transforms instead of the
/// implementation-defined std::*_distribution classes.
///   uniform(): (x >> 11) * 2^-53, in [0, 1)
///   normal():  Box-Muller on u1 = 1 - uniform(), u2 = uniform();
///              returns sqrt(-2 ln u1) cos(2 pi u2), then caches the sin term.
/// Complex normals draw the real part first, then the imaginary part.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename Scalar>
  Scalar normal_scalar() {
    if constexpr (is_complex_v<Scalar>) {
      const double re = normal();
      const double im = normal();
      return Scalar(re, im);
    } else {
      return Scalar(normal());
    }
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0;
  bool has_spare_ = false;
};

/// Standard normal entries, column-major draw order.
template <typename Scalar>
Matrix<Scalar> random_normal_matrix(Index rows, Index cols, Rng& rng) {
  Matrix<Scalar> out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = rng.normal_scalar<Scalar>();
  return out;
}

template <typename Scalar>
DenseTensor<Scalar> random_normal_tensor(const std::vector<Index>& dims, Rng& rng) {
  DenseTensor<Scalar> out(dims);
  for (Index i = 0; i < out.size(); ++i) out[i] = rng.normal_scalar<Scalar>();
  return out;
}

/// Orthonormal n x k matrix: polar factor of a standard normal matrix.
template <typename Scalar>
Matrix<Scalar> random_orthonormal(Index n, Index k, Rng& rng) {
  return polar_factor<Scalar>(random_normal_matrix<Scalar>(n, k, rng)).Q;
}

template <typename Scalar>
FactorTuple<Scalar> random_factors(const std::vector<Index>& dims, const BlockPartition& partition, Rng& rng) {
  partition.check_fits(dims);
  FactorTuple<Scalar> out;
  for (std::size_t l = 0; l < dims.size(); ++l) out.push_back(random_orthonormal<Scalar>(dims[l], partition.total(l), rng));
  return out;
}

/// Leading k_l columns of the identity on every mode.
template <typename Scalar>
FactorTuple<Scalar> identity_factors(const std::vector<Index>& dims, const BlockPartition& partition) {
  partition.check_fits(dims);
  FactorTuple<Scalar> out;
  for (std::size_t l = 0; l < dims.size(); ++l) out.push_back(Matrix<Scalar>::Identity(dims[l], partition.total(l)));
  return out;
}

}  // namespace ptbd
