#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "ptbd/tensor.hpp"

namespace ptbd {

/// Raised when a dense factorization does not converge or produces non-finite output.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct SvdResult {
  Matrix<Scalar> U;
  Eigen::Matrix<RealOf<Scalar>, Eigen::Dynamic, 1> singular_values;
  Matrix<Scalar> V;
};

template <typename Scalar>
struct PolarResult {
  Matrix<Scalar> Q;
  Matrix<Scalar> H;
};

/// Thin SVD A = U diag(s) V^H with r = min(rows, cols) singular values in
/// nonincreasing order.
template <typename Scalar>
SvdResult<Scalar> thin_svd(const Matrix<Scalar>& a) {
  Eigen::JacobiSVD<Matrix<Scalar>, Eigen::ColPivHouseholderQRPreconditioner> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("thin_svd: factorization failed for a " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " matrix");
  }
  SvdResult<Scalar> out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  if (!out.singular_values.allFinite()) throw NumericalError("thin_svd: non-finite singular values");
  return out;
}

/// Orthonormal polar factor of a tall matrix. Reuses a precomputed SVD when given.
template <typename Scalar>
PolarResult<Scalar> polar_from_svd(const SvdResult<Scalar>& svd) {
  PolarResult<Scalar> out;
  out.Q.noalias() = svd.U * svd.V.adjoint();
  out.H.noalias() = svd.V * svd.singular_values.template cast<Scalar>().asDiagonal() * svd.V.adjoint();
  out.H = (out.H + out.H.adjoint()).eval() / RealOf<Scalar>(2);
  return out;
}

/// A = Q H with Q orthonormal (n x k) and H Hermitian positive semidefinite
/// (k x k). Q is unique when A has full column rank; otherwise the SVD
/// routine's completion of the singular basis is used as-is.
template <typename Scalar>
PolarResult<Scalar> polar_factor(const Matrix<Scalar>& a) {
  if (a.rows() < a.cols()) {
    throw std::invalid_argument("polar_factor: need rows >= cols, got " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
  }
  return polar_from_svd(thin_svd(a));
}

template <typename Scalar>
RealOf<Scalar> trace_norm(const Matrix<Scalar>& a) {
  if (a.size() == 0) return 0;
  return thin_svd(a).singular_values.sum();
}

/// Hermitian part (X + X^H) / 2.
template <typename Scalar>
Matrix<Scalar> sym(const Matrix<Scalar>& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("sym: matrix must be square");
  return (a + a.adjoint()) / RealOf<Scalar>(2);
}

/// ||P^H P - I||_F.
template <typename Scalar>
RealOf<Scalar> orthonormality_error(const Matrix<Scalar>& p) {
  return (p.adjoint() * p - Matrix<Scalar>::Identity(p.cols(), p.cols())).norm();
}

namespace detail {

// Orthonormal basis of range(x) from its SVD, dropping directions whose
// singular value is at or below `cutoff`.
template <typename Scalar>
Matrix<Scalar> orth(const Matrix<Scalar>& x, RealOf<Scalar> cutoff) {
  if (x.cols() == 0) return Matrix<Scalar>(x.rows(), 0);
  const auto svd = thin_svd(x);
  Index rank = 0;
  while (rank < svd.singular_values.size() && svd.singular_values(rank) > cutoff) ++rank;
  return svd.U.leftCols(rank);
}

}  // namespace detail

/// Returns [P, S'] where S' is an orthonormal basis for the part of range(S)
/// orthogonal to range(P). Two rounds of projection + orthonormalization; the
/// first P.cols() output columns are copied from P unchanged.
template <typename Scalar>
Matrix<Scalar> orth_complement_extend(const Matrix<Scalar>& p, const Matrix<Scalar>& s) {
  using Real = RealOf<Scalar>;
  if (s.rows() != p.rows()) throw std::invalid_argument("orth_complement_extend: row count mismatch");
  const Index n = p.rows();
  const Index k = p.cols();

  // Columns are normalized first so the rank cutoff does not depend on the
  // relative scale of the residual and previous-iterate blocks.
  Matrix<Scalar> work(n, s.cols());
  Index kept = 0;
  for (Index j = 0; j < s.cols(); ++j) {
    const Real nrm = s.col(j).norm();
    if (nrm > 0 && std::isfinite(nrm)) work.col(kept++) = s.col(j) / nrm;
  }
  work.conservativeResize(n, kept);

  const Real eps = std::numeric_limits<Real>::epsilon();
  const Real cutoff = Real(std::max(n, kept)) * eps * std::max(Real(1), std::sqrt(Real(kept)));
  for (int pass = 0; pass < 2 && work.cols() > 0; ++pass) {
    work -= p * (p.adjoint() * work);
    work = detail::orth(work, cutoff);
  }
  const Index extra = std::min<Index>(work.cols(), n - k);

  Matrix<Scalar> out(n, k + extra);
  out.leftCols(k) = p;
  if (extra > 0) out.rightCols(extra) = work.leftCols(extra);
  return out;
}

namespace detail {

// Power iteration on A A^H with user-provided products. Returns the largest
// singular value estimate ||A^H v|| for the final unit vector v.
template <typename Real, typename Vec, typename Apply, typename ApplyAdjoint>
Real power_iteration_norm(Vec v, Apply&& apply, ApplyAdjoint&& apply_adjoint, int max_iterations,
                          Real rel_tolerance) {
  Real nv = v.norm();
  if (nv == 0) return 0;
  v /= nv;
  Real estimate = 0;
  for (int it = 0; it < max_iterations; ++it) {
    const auto w = apply_adjoint(v);
    const Real next = w.norm();
    if (next == 0) return 0;
    Vec u = apply(w);
    const Real nu = u.norm();
    if (nu == 0) return next;
    v = u / nu;
    const bool settled = std::abs(next - estimate) <= rel_tolerance * next;
    estimate = next;
    if (settled) break;
  }
  return estimate;
}

}  // namespace detail

struct SpectralEstimateOptions {
  int max_iterations = 30;
  double rel_tolerance = 1e-10;
};

/// Estimate of ||A||_2 for residual normalization: the smaller of the
/// sqrt(||A||_1 ||A||_inf) bound and a capped power iteration on A A^H.
template <typename Scalar>
RealOf<Scalar> spectral_norm_estimate(const Matrix<Scalar>& a, SpectralEstimateOptions opts = {}) {
  using Real = RealOf<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (a.size() == 0) return 0;
  const Real norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  const Real norm_inf = a.cwiseAbs().rowwise().sum().maxCoeff();
  const Real bound = std::sqrt(norm1 * norm_inf);
  if (bound == 0) return 0;
  const Vec start = a.cwiseAbs().rowwise().sum().template cast<Scalar>();
  const Real power = detail::power_iteration_norm<Real, Vec>(
      start, [&](const Vec& w) -> Vec { return a * w; }, [&](const Vec& v) -> Vec { return a.adjoint() * v; },
      opts.max_iterations, Real(opts.rel_tolerance));
  return std::min(bound, power);
}

/// ||sin Theta(range(P1), range(P2))||_F for orthonormal P1, P2 of equal width.
template <typename Scalar>
RealOf<Scalar> sin_theta_frob(const Matrix<Scalar>& p1, const Matrix<Scalar>& p2) {
  if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) {
    throw std::invalid_argument("sin_theta_frob: shape mismatch");
  }
  const RealOf<Scalar> cos_sq = (p1.adjoint() * p2).squaredNorm();
  return std::sqrt(std::max(RealOf<Scalar>(0), RealOf<Scalar>(p1.cols()) - cos_sq));
}

}  // namespace ptbd
