#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptbd/block_structure.hpp"
#include "ptbd/matrix_kernels.hpp"
#include "ptbd/tensor.hpp"

namespace ptbd {

namespace detail {

// Maps for the (left x n) slab of mode-`mode` fibers at outer index c.
template <typename Scalar>
struct SlabView {
  const DenseTensor<Scalar>& t;
  std::size_t mode;
  Index left, n, right;

  explicit SlabView(const DenseTensor<Scalar>& tensor, std::size_t m)
      : t(tensor), mode(m), left(tensor.stride_before(m)), n(tensor.dim(m)), right(tensor.stride_after(m)) {}

  Eigen::Map<const Matrix<Scalar>> slab(Index c) const { return {t.data() + left * n * c, left, n}; }
};

}  // namespace detail

/// Estimate of ||unfold(B, mode)||_2 computed without materializing the
/// unfolding: min of sqrt(||.||_1 ||.||_inf) and capped power iteration.
template <typename Scalar>
RealOf<Scalar> unfolding_norm_estimate(const DenseTensor<Scalar>& b, std::size_t mode,
                                       SpectralEstimateOptions opts = {}) {
  using Real = RealOf<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  detail::check_mode(mode, b.order());
  const detail::SlabView<Scalar> view(b, mode);

  Real norm1 = 0;
  Eigen::Matrix<Real, Eigen::Dynamic, 1> row_abs = Eigen::Matrix<Real, Eigen::Dynamic, 1>::Zero(view.n);
  for (Index c = 0; c < view.right; ++c) {
    const auto s = view.slab(c);
    const auto abs = s.cwiseAbs();
    norm1 = std::max(norm1, abs.rowwise().sum().maxCoeff());
    row_abs += abs.colwise().sum().transpose();
  }
  const Real bound = std::sqrt(norm1 * row_abs.maxCoeff());
  if (bound == 0) return 0;

  // v lives in row space (length n); w = A^H v lives in column space.
  auto apply_adjoint = [&](const Vec& v) -> Vec {
    Vec w(view.left * view.right);
    for (Index c = 0; c < view.right; ++c) w.segment(view.left * c, view.left).noalias() = view.slab(c).conjugate() * v;
    return w;
  };
  auto apply = [&](const Vec& w) -> Vec {
    Vec u = Vec::Zero(view.n);
    for (Index c = 0; c < view.right; ++c) {
      u.noalias() += view.slab(c).transpose() * w.segment(view.left * c, view.left);
    }
    return u;
  };
  const Real power = detail::power_iteration_norm<Real, Vec>(row_abs.template cast<Scalar>(), apply, apply_adjoint,
                                                             opts.max_iterations, Real(opts.rel_tolerance));
  return std::min(bound, power);
}

/// A tensor bound to a block partition, with the norms used to normalize
/// KKT residuals cached up front.
template <typename Scalar>
class ProblemBinding {
 public:
  using Real = RealOf<Scalar>;

  ProblemBinding(DenseTensor<Scalar> b, BlockPartition partition, SpectralEstimateOptions opts = {})
      : b_(std::move(b)), partition_(std::move(partition)) {
    partition_.check_fits(b_.dims());
    norm_b_ = frobenius_norm(b_);
    unfold_norms_.resize(b_.order());
    for (std::size_t l = 0; l < b_.order(); ++l) unfold_norms_[l] = unfolding_norm_estimate(b_, l, opts);
  }

  const DenseTensor<Scalar>& tensor() const { return b_; }
  const BlockPartition& partition() const { return partition_; }
  std::size_t order() const { return b_.order(); }
  Real norm() const { return norm_b_; }
  Real unfold_norm(std::size_t mode) const { return unfold_norms_.at(mode); }
  const std::vector<Real>& unfold_norms() const { return unfold_norms_; }

  /// ||B||_F * est ||B_(mode)||_2, the per-mode KKT denominator.
  Real kkt_scale(std::size_t mode) const { return norm_b_ * unfold_norms_.at(mode); }

 private:
  DenseTensor<Scalar> b_;
  BlockPartition partition_;
  Real norm_b_ = 0;
  std::vector<Real> unfold_norms_;
};

/// B contracted with P_i^H on every mode except `mode` (full factors, all blocks).
template <typename Scalar>
DenseTensor<Scalar> mode_contraction(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& factors, std::size_t mode) {
  detail::check_mode(mode, b.order());
  DenseTensor<Scalar> out = b;
  for (std::size_t i = 0; i < b.order(); ++i) {
    if (i == mode) continue;
    const Matrix<Scalar> ph = factors[i].adjoint();
    out = mode_multiply(out, ph, i);
  }
  return out;
}

/// C_{mode,block} from a mode contraction G: the block-`block` ranges on the
/// other modes, full range on `mode`, unfolded along `mode`.
template <typename Scalar>
Matrix<Scalar> block_unfolding(const DenseTensor<Scalar>& contracted, const BlockPartition& partition,
                               std::size_t mode, std::size_t block) {
  std::vector<Index> offsets = partition.block_offsets(block);
  std::vector<Index> extents = partition.block_dims(block);
  offsets[mode] = 0;
  extents[mode] = contracted.dim(mode);
  return unfold(subtensor(contracted, offsets, extents), mode);
}

template <typename Scalar>
struct GradientParts {
  Matrix<Scalar> gradient;                  // [H_1 P_1, ..., H_t P_t] without the factor 2
  std::vector<Matrix<Scalar>> contractions; // C_{mode,s}
  RealOf<Scalar> objective = 0;             // sum_s ||C_s^H P_s||_F^2 at the given P_mode
};

/// Gradient column blocks C_s (C_s^H P_s), never forming C_s C_s^H.
template <typename Scalar>
GradientParts<Scalar> gradient_from_contraction(const DenseTensor<Scalar>& contracted, const Matrix<Scalar>& p_mode,
                                                const BlockPartition& partition, std::size_t mode) {
  GradientParts<Scalar> out;
  out.gradient.resize(p_mode.rows(), p_mode.cols());
  out.contractions.reserve(partition.block_count());
  for (std::size_t s = 0; s < partition.block_count(); ++s) {
    Matrix<Scalar> c = block_unfolding(contracted, partition, mode, s);
    const auto p_s = p_mode.middleCols(partition.offset(mode, s), partition.block_size(mode, s));
    const Matrix<Scalar> w = c.adjoint() * p_s;
    out.objective += w.squaredNorm();
    out.gradient.middleCols(partition.offset(mode, s), partition.block_size(mode, s)).noalias() = c * w;
    out.contractions.push_back(std::move(c));
  }
  return out;
}

/// sum_s ||C_s^H X_s||_F^2 for a candidate factor X on `mode`.
template <typename Scalar>
RealOf<Scalar> objective_from_contractions(const std::vector<Matrix<Scalar>>& contractions, const Matrix<Scalar>& x,
                                           const BlockPartition& partition, std::size_t mode) {
  RealOf<Scalar> acc = 0;
  for (std::size_t s = 0; s < contractions.size(); ++s) {
    acc += (contractions[s].adjoint() * x.middleCols(partition.offset(mode, s), partition.block_size(mode, s)))
               .squaredNorm();
  }
  return acc;
}

/// C_{mode,block} = unfold_mode(B x_i P_{i,block}^H for i != mode).
template <typename Scalar>
Matrix<Scalar> contraction(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& factors,
                           const BlockPartition& partition, std::size_t mode, std::size_t block) {
  check_conformable(b.dims(), factors, partition);
  detail::check_mode(mode, b.order());
  if (block >= partition.block_count()) throw std::out_of_range("contraction: block out of range");
  DenseTensor<Scalar> out = b;
  for (std::size_t i = 0; i < b.order(); ++i) {
    if (i == mode) continue;
    const Matrix<Scalar> ph = factor_block(factors[i], partition, i, block).adjoint();
    out = mode_multiply(out, ph, i);
  }
  return unfold(out, mode);
}

/// f(P) = sum_s ||B x_1 P_{1s}^H ... x_m P_{ms}^H||_F^2.
template <typename Scalar>
RealOf<Scalar> objective_value(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& factors,
                               const BlockPartition& partition) {
  check_conformable(b.dims(), factors, partition);
  RealOf<Scalar> acc = 0;
  for (std::size_t s = 0; s < partition.block_count(); ++s) {
    DenseTensor<Scalar> t = b;
    for (std::size_t l = 0; l < b.order(); ++l) {
      const Matrix<Scalar> ph = factor_block(factors[l], partition, l, s).adjoint();
      t = mode_multiply(t, ph, l);
    }
    acc += t.vec().squaredNorm();
  }
  return acc;
}

template <typename Scalar>
RealOf<Scalar> objective_value(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& factors) {
  return objective_value(binding.tensor(), factors, binding.partition());
}

/// Partial gradient with respect to P_mode, scaled without the factor 2:
/// the Euclidean gradient of f is twice this matrix.
template <typename Scalar>
Matrix<Scalar> partial_gradient(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& factors,
                                const BlockPartition& partition, std::size_t mode) {
  check_conformable(b.dims(), factors, partition);
  detail::check_mode(mode, b.order());
  return gradient_from_contraction(mode_contraction(b, factors, mode), factors[mode], partition, mode).gradient;
}

/// H - P sym(P^H H): the gradient with its Hermitian-multiplier part removed.
template <typename Scalar>
Matrix<Scalar> projected_residual(const Matrix<Scalar>& gradient, const Matrix<Scalar>& p) {
  return gradient - p * sym<Scalar>(p.adjoint() * gradient);
}

template <typename Scalar>
Matrix<Scalar> locg_residual(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& factors,
                             const BlockPartition& partition, std::size_t mode) {
  return projected_residual<Scalar>(partial_gradient(b, factors, partition, mode), factors[mode]);
}

namespace detail {

template <typename Real>
Real normalized(Real numerator, Real scale) {
  return scale > 0 ? numerator / scale : Real(0);
}

}  // namespace detail

/// Normalized KKT residual with every gradient evaluated at the same tuple.
template <typename Scalar>
RealOf<Scalar> kkt_residual_full(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& factors) {
  check_conformable(binding.tensor().dims(), factors, binding.partition());
  RealOf<Scalar> acc = 0;
  for (std::size_t l = 0; l < binding.order(); ++l) {
    const Matrix<Scalar> h = partial_gradient(binding.tensor(), factors, binding.partition(), l);
    acc += detail::normalized(projected_residual<Scalar>(h, factors[l]).norm(), binding.kkt_scale(l));
  }
  return acc;
}

/// Staggered KKT residual from gradients already produced by a Gauss-Seidel
/// sweep: pairs (P_l at the start of the sweep, gradient evaluated for mode l).
template <typename Scalar>
RealOf<Scalar> kkt_residual_cheap(const ProblemBinding<Scalar>& binding,
                                  const std::vector<std::pair<Matrix<Scalar>, Matrix<Scalar>>>& sweep_gradients) {
  if (sweep_gradients.size() != binding.order()) {
    throw std::invalid_argument("kkt_residual_cheap: need one (factor, gradient) pair per mode");
  }
  RealOf<Scalar> acc = 0;
  for (std::size_t l = 0; l < binding.order(); ++l) {
    const auto& [p, h] = sweep_gradients[l];
    acc += detail::normalized(projected_residual<Scalar>(h, p).norm(), binding.kkt_scale(l));
  }
  return acc;
}

/// Same quantity from the tuples at the start and end of a sweep; mode l
/// uses (new_1..new_{l-1}, old_l..old_m).
template <typename Scalar>
RealOf<Scalar> kkt_residual_cheap(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& before,
                                  const FactorTuple<Scalar>& after) {
  check_conformable(binding.tensor().dims(), before, binding.partition());
  check_conformable(binding.tensor().dims(), after, binding.partition());
  std::vector<std::pair<Matrix<Scalar>, Matrix<Scalar>>> pairs;
  FactorTuple<Scalar> staggered = before;
  for (std::size_t l = 0; l < binding.order(); ++l) {
    pairs.emplace_back(before[l], partial_gradient(binding.tensor(), staggered, binding.partition(), l));
    staggered[l] = after[l];
  }
  return kkt_residual_cheap(binding, pairs);
}

/// Reuses one single-mode contraction B x_i P_i^H across consecutive
/// Gauss-Seidel steps. For mode l the cached mode is chosen outside
/// {l, l+1}, so the following step can start from it as well.
template <typename Scalar>
class SweepContractor {
 public:
  explicit SweepContractor(const DenseTensor<Scalar>& b) : b_(b) {}

  DenseTensor<Scalar> contract_all_but(std::size_t mode, const FactorTuple<Scalar>& factors,
                                       const std::vector<std::uint64_t>& versions) {
    const std::size_t m = b_.order();
    std::vector<bool> done(m, false);
    done[mode] = true;

    const bool hit = cached_.has_value() && cached_mode_ != mode && versions[cached_mode_] == cached_version_;
    if (!hit) {
      const std::size_t next = (mode + 1) % m;
      std::size_t first = (mode == 0) ? 1 : 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (i != mode && i != next) {
          first = i;
          break;
        }
      }
      const Matrix<Scalar> ph = factors[first].adjoint();
      cached_ = mode_multiply(b_, ph, first);
      cached_mode_ = first;
      cached_version_ = versions[first];
      ++misses_;
    } else {
      ++hits_;
    }
    done[cached_mode_] = true;

    DenseTensor<Scalar> out = *cached_;
    for (std::size_t i = 0; i < m; ++i) {
      if (done[i]) continue;
      const Matrix<Scalar> ph = factors[i].adjoint();
      out = mode_multiply(out, ph, i);
    }
    return out;
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  const DenseTensor<Scalar>& b_;
  std::optional<DenseTensor<Scalar>> cached_;
  std::size_t cached_mode_ = 0;
  std::uint64_t cached_version_ = 0;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace ptbd
