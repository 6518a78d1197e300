#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptbd/block_structure.hpp"
#include "ptbd/matrix_kernels.hpp"
#include "ptbd/problem.hpp"
#include "ptbd/tensor.hpp"

namespace ptbd {

struct SolverConfig {
  double tol_obj = 1e-12;      // |f_j - f_{j-1}| / f_j threshold, only used with use_obj_stop
  double tol_kkt = 1e-9;       // normalized KKT residual threshold
  int max_outer = 2000;
  double inner_fraction = 0.125;
  int max_inner = 50;
  bool use_obj_stop = false;
  bool record_diagnostics = true;
  int full_kkt_every = 25;     // sweeps between on-demand full KKT evaluations (diagnostics only)
  int stall_window = 10;
  double stall_rel_change = 1e-15;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(tol_obj > 0) || !(tol_kkt > 0)) throw std::invalid_argument("SolverConfig: tolerances must be positive");
    if (!(inner_fraction > 0 && inner_fraction < 1)) throw std::invalid_argument("SolverConfig: inner_fraction must be in (0,1)");
    if (max_outer < 1 || max_inner < 1) throw std::invalid_argument("SolverConfig: iteration caps must be positive");
  }
};

enum class SolveStatus { converged, max_iter, stalled };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::stalled: return "stalled";
  }
  return "unknown";
}

inline SolveStatus status_from_string(const std::string& s) {
  if (s == "converged") return SolveStatus::converged;
  if (s == "max_iter") return SolveStatus::max_iter;
  if (s == "stalled") return SolveStatus::stalled;
  throw std::invalid_argument("unknown solve status '" + s + "'");
}

/// One outer iteration. Per-mode vectors are indexed by mode.
struct IterationRecord {
  int outer_index = 0;
  double objective = 0;
  double kkt_cheap = 0;
  std::optional<double> kkt_full;
  std::vector<double> step_gains;        // ||H||_tr - Re tr(P^H H) for the gradient used on each mode
  std::vector<double> sin_theta_sq;      // ||sin Theta(R(P_new), R(P_old))||_F^2
  std::vector<double> sigma_min;         // smallest singular value of that gradient
  std::vector<double> proj_residual_sq;  // ||H - P (P^H H)||_F^2 / ||H||_F^2
  std::vector<double> mode_objectives;   // objective right after each mode update (Gauss-Seidel only)
  std::optional<int> inner_iterations;
  std::optional<double> step_gain_ratio;  // accelerated solver: f increase / max_l step gain
  double elapsed_seconds = 0;
};

template <typename Scalar>
struct SolveResult {
  FactorTuple<Scalar> factors;
  DenseTensor<Scalar> core;
  std::vector<DenseTensor<Scalar>> blocks;
  std::vector<Matrix<Scalar>> multipliers;  // sym(P_l^H H_l) at the final tuple
  std::vector<IterationRecord> trace;
  SolveStatus status = SolveStatus::max_iter;
  double initial_objective = 0;
  double objective = 0;
  double kkt_cheap = 0;
  double kkt_full = 0;
  int iterations = 0;
  long total_inner_iterations = 0;
  double elapsed_seconds = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Scalar>
void check_initial_factors(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& init) {
  check_conformable(binding.tensor().dims(), init, binding.partition());
  for (std::size_t l = 0; l < init.size(); ++l) {
    if (!(orthonormality_error(init[l]) <= 1e-10)) {
      throw std::invalid_argument("initial factor " + std::to_string(l) + " is not orthonormal");
    }
  }
}

template <typename Scalar>
void keep_orthonormal(Matrix<Scalar>& p) {
  if (orthonormality_error(p) > 1e-12) p = polar_factor<Scalar>(p).Q;
}

template <typename Scalar>
double relative_projection_residual(const Matrix<Scalar>& h, const Matrix<Scalar>& p) {
  const double hn = h.squaredNorm();
  if (hn == 0) return 0;
  return (h - p * (p.adjoint() * h)).squaredNorm() / hn;
}

// Core, blocks, Hermitian multipliers and the full KKT residual at the final tuple.
template <typename Scalar>
void finalize(const ProblemBinding<Scalar>& binding, SolveResult<Scalar>& result) {
  result.core = core_tensor(binding.tensor(), result.factors);
  result.blocks = bdiag_extract(result.core, binding.partition());
  result.multipliers.clear();
  double kkt = 0;
  for (std::size_t l = 0; l < binding.order(); ++l) {
    const Matrix<Scalar> h = partial_gradient(binding.tensor(), result.factors, binding.partition(), l);
    const Matrix<Scalar> lambda = sym<Scalar>(result.factors[l].adjoint() * h);
    kkt += normalized<double>((h - result.factors[l] * lambda).norm(), binding.kkt_scale(l));
    result.multipliers.push_back(lambda);
  }
  result.kkt_full = kkt;
  result.objective = bdiag_norm_sq(result.blocks);
}

inline bool objective_settled(double f, double f_prev, double tol) {
  const double change = std::abs(f - f_prev);
  if (f == 0) return change == 0;
  return change / std::abs(f) <= tol;
}

class StallDetector {
 public:
  StallDetector(int window, double rel_change) : window_(window), rel_change_(rel_change) {}

  bool update(double f, double f_prev, bool kkt_met) {
    const double scale = std::max(std::abs(f), std::numeric_limits<double>::min());
    if (!kkt_met && std::abs(f - f_prev) / scale < rel_change_) {
      ++run_;
    } else {
      run_ = 0;
    }
    return run_ >= window_;
  }

 private:
  int window_;
  double rel_change_;
  int run_ = 0;
};

}  // namespace detail

/// Alternating NPDo with Gauss-Seidel updates: each mode's factor is replaced
/// by the orthonormal polar factor of its partial gradient evaluated at the
/// freshest iterates. Stops when the staggered KKT residual reaches tol_kkt
/// (and, with use_obj_stop, the relative objective change reaches tol_obj).
template <typename Scalar>
SolveResult<Scalar> npdo_solve(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& init,
                               const SolverConfig& config) {
  config.validate();
  detail::check_initial_factors(binding, init);
  const auto start = detail::Clock::now();
  const auto& partition = binding.partition();
  const std::size_t m = binding.order();

  SolveResult<Scalar> result;
  result.factors = init;
  FactorTuple<Scalar>& p = result.factors;
  result.initial_objective = objective_value(binding, p);

  SweepContractor<Scalar> contractor(binding.tensor());
  std::vector<std::uint64_t> versions(m, 0);
  detail::StallDetector stall(config.stall_window, config.stall_rel_change);
  double f_prev = result.initial_objective;

  for (int j = 1; j <= config.max_outer; ++j) {
    IterationRecord rec;
    rec.outer_index = j;
    double kkt = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const DenseTensor<Scalar> contracted = contractor.contract_all_but(l, p, versions);
      GradientParts<Scalar> parts = gradient_from_contraction(contracted, p[l], partition, l);
      const Matrix<Scalar>& h = parts.gradient;

      SvdResult<Scalar> svd;
      try {
        svd = thin_svd(h);
      } catch (const NumericalError& e) {
        throw NumericalError("npdo_solve: sweep " + std::to_string(j) + ", mode " + std::to_string(l) + ": " + e.what());
      }

      kkt += detail::normalized<double>(projected_residual<Scalar>(h, p[l]).norm(), binding.kkt_scale(l));
      const double before = std::real((p[l].adjoint() * h).trace());
      rec.step_gains.push_back(double(svd.singular_values.sum()) - before);

      Matrix<Scalar> next = polar_from_svd(svd).Q;
      detail::keep_orthonormal(next);
      if (config.record_diagnostics) {
        const double st = sin_theta_frob<Scalar>(next, p[l]);
        rec.sin_theta_sq.push_back(st * st);
        rec.sigma_min.push_back(svd.singular_values.size() ? double(svd.singular_values.minCoeff()) : 0.0);
        rec.proj_residual_sq.push_back(detail::relative_projection_residual<Scalar>(h, p[l]));
      }
      rec.mode_objectives.push_back(objective_from_contractions(parts.contractions, next, partition, l));
      p[l] = std::move(next);
      ++versions[l];
    }
    rec.objective = rec.mode_objectives.back();
    rec.kkt_cheap = kkt;
    if (config.record_diagnostics && config.full_kkt_every > 0 && j % config.full_kkt_every == 0) {
      rec.kkt_full = kkt_residual_full(binding, p);
    }
    rec.elapsed_seconds = detail::seconds_since(start);
    result.trace.push_back(rec);
    result.iterations = j;
    result.kkt_cheap = kkt;

    const bool kkt_met = kkt <= config.tol_kkt;
    const bool obj_met = !config.use_obj_stop || detail::objective_settled(rec.objective, f_prev, config.tol_obj);
    if (kkt_met && obj_met) {
      result.status = SolveStatus::converged;
      break;
    }
    if (stall.update(rec.objective, f_prev, kkt_met)) {
      result.status = SolveStatus::stalled;
      break;
    }
    f_prev = rec.objective;
  }

  detail::finalize(binding, result);
  if (!result.trace.empty() && result.trace.back().kkt_full == std::nullopt) {
    result.trace.back().kkt_full = result.kkt_full;
  }
  result.elapsed_seconds = detail::seconds_since(start);
  return result;
}

namespace detail {

template <typename Scalar>
struct TupleGradients {
  std::vector<Matrix<Scalar>> gradients;
  double objective = 0;
};

// All partial gradients at one tuple (Jacobi-style evaluation).
template <typename Scalar>
TupleGradients<Scalar> gradients_at(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& p) {
  TupleGradients<Scalar> out;
  SweepContractor<Scalar> contractor(binding.tensor());
  const std::vector<std::uint64_t> versions(binding.order(), 0);
  for (std::size_t l = 0; l < binding.order(); ++l) {
    auto parts = gradient_from_contraction(contractor.contract_all_but(l, p, versions), p[l], binding.partition(), l);
    if (l == 0) out.objective = parts.objective;
    out.gradients.push_back(std::move(parts.gradient));
  }
  return out;
}

}  // namespace detail

/// LOCG-accelerated NPDo. Each outer step searches the span of the current
/// factor, its projected gradient residual and the previous factor: the
/// tensor is compressed onto orthonormal bases S_l of those spans and the
/// reduced problem is solved by npdo_solve started from the leading identity
/// columns (which correspond to the current factors).
///
/// The outer stopping test uses the full KKT residual at the current tuple,
/// which is available from the residuals built for the search spaces.
template <typename Scalar>
SolveResult<Scalar> accnpdo_solve(const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& init,
                                  const SolverConfig& config) {
  config.validate();
  detail::check_initial_factors(binding, init);
  const auto start = detail::Clock::now();
  const auto& partition = binding.partition();
  const std::size_t m = binding.order();

  SolveResult<Scalar> result;
  result.factors = init;
  FactorTuple<Scalar>& p = result.factors;
  std::optional<FactorTuple<Scalar>> previous;

  auto grads = detail::gradients_at(binding, p);
  result.initial_objective = grads.objective;
  double f_current = grads.objective;
  detail::StallDetector stall(config.stall_window, config.stall_rel_change);

  SolverConfig inner = config;
  inner.max_outer = config.max_inner;
  inner.record_diagnostics = false;
  inner.use_obj_stop = false;

  for (int j = 1; j <= config.max_outer; ++j) {
    IterationRecord rec;
    rec.outer_index = j;

    // Residuals, KKT measure and single-step gains at the current tuple.
    std::vector<Matrix<Scalar>> residuals;
    double kkt = 0;
    double gain_max = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const Matrix<Scalar>& h = grads.gradients[l];
      residuals.push_back(projected_residual<Scalar>(h, p[l]));
      kkt += detail::normalized<double>(residuals.back().norm(), binding.kkt_scale(l));
      SvdResult<Scalar> svd;
      try {
        svd = thin_svd(h);
      } catch (const NumericalError& e) {
        throw NumericalError("accnpdo_solve: outer " + std::to_string(j) + ", mode " + std::to_string(l) + ": " + e.what());
      }
      const double gain = double(svd.singular_values.sum()) - std::real((p[l].adjoint() * h).trace());
      rec.step_gains.push_back(gain);
      gain_max = std::max(gain_max, gain);
      if (config.record_diagnostics) {
        rec.sigma_min.push_back(svd.singular_values.size() ? double(svd.singular_values.minCoeff()) : 0.0);
        rec.proj_residual_sq.push_back(detail::relative_projection_residual<Scalar>(h, p[l]));
      }
    }
    if (j == 1) result.kkt_cheap = kkt;
    const double tol_inner = config.inner_fraction * kkt;

    // Search spaces S_l = [P_l, orth(R_l, P_l^{prev})].
    FactorTuple<Scalar> bases;
    DenseTensor<Scalar> reduced = binding.tensor();
    for (std::size_t l = 0; l < m; ++l) {
      Matrix<Scalar> extra = residuals[l];
      if (previous) {
        extra.conservativeResize(Eigen::NoChange, residuals[l].cols() + (*previous)[l].cols());
        extra.rightCols((*previous)[l].cols()) = (*previous)[l];
      }
      bases.push_back(orth_complement_extend<Scalar>(p[l], extra));
      const Matrix<Scalar> sh = bases.back().adjoint();
      reduced = mode_multiply(reduced, sh, l);
    }

    ProblemBinding<Scalar> reduced_binding(std::move(reduced), partition);
    FactorTuple<Scalar> y0;
    for (std::size_t l = 0; l < m; ++l) y0.push_back(Matrix<Scalar>::Identity(bases[l].cols(), partition.total(l)));
    SolverConfig inner_cfg = inner;
    inner_cfg.tol_kkt = std::max(tol_inner, std::numeric_limits<double>::min());
    SolveResult<Scalar> sub;
    try {
      sub = npdo_solve(reduced_binding, y0, inner_cfg);
    } catch (const NumericalError& e) {
      throw NumericalError("accnpdo_solve: reduced problem at outer " + std::to_string(j) + ": " + e.what());
    }
    rec.inner_iterations = sub.iterations;
    result.total_inner_iterations += sub.iterations;

    FactorTuple<Scalar> next;
    for (std::size_t l = 0; l < m; ++l) {
      Matrix<Scalar> x = bases[l] * sub.factors[l];
      detail::keep_orthonormal(x);
      if (config.record_diagnostics) {
        const double st = sin_theta_frob<Scalar>(x, p[l]);
        rec.sin_theta_sq.push_back(st * st);
      }
      next.push_back(std::move(x));
    }
    previous = std::move(p);
    p = std::move(next);

    grads = detail::gradients_at(binding, p);
    const double f_next = grads.objective;
    if (gain_max > 0) rec.step_gain_ratio = (f_next - f_current) / gain_max;

    double kkt_next = 0;
    for (std::size_t l = 0; l < m; ++l) {
      kkt_next += detail::normalized<double>(projected_residual<Scalar>(grads.gradients[l], p[l]).norm(),
                                             binding.kkt_scale(l));
    }
    rec.objective = f_next;
    rec.kkt_cheap = kkt_next;
    rec.kkt_full = kkt_next;
    rec.elapsed_seconds = detail::seconds_since(start);
    result.trace.push_back(rec);
    result.iterations = j;
    result.kkt_cheap = kkt_next;

    const bool kkt_met = kkt_next <= config.tol_kkt;
    const bool obj_met = !config.use_obj_stop || detail::objective_settled(f_next, f_current, config.tol_obj);
    if (kkt_met && obj_met) {
      result.status = SolveStatus::converged;
      break;
    }
    if (stall.update(f_next, f_current, kkt_met)) {
      result.status = SolveStatus::stalled;
      break;
    }
    f_current = f_next;
  }

  detail::finalize(binding, result);
  result.elapsed_seconds = detail::seconds_since(start);
  return result;
}

/// Cumulative convergence series built from a recorded trace.
struct SeriesSummary {
  // [mode][iteration] partial sums of sigma_min * ||sin Theta||_F^2
  std::vector<std::vector<double>> step_series;
  // [mode][iteration] partial sums of sigma_min * ||H - P P^H H||_F^2 / ||H||_F^2
  std::vector<std::vector<double>> projection_series;
  // [iteration][mode] normalized projection residuals ||H - P P^H H||_F^2 / ||H||_F^2
  std::vector<std::vector<double>> projection_residuals;
  bool finite_and_nondecreasing = true;

  /// Fraction of a series total contributed by its last quarter of terms.
  static double last_quarter_fraction(const std::vector<double>& partial_sums) {
    if (partial_sums.empty()) return 0;
    const double total = partial_sums.back();
    if (total == 0) return 0;
    const std::size_t n = partial_sums.size();
    const std::size_t cut = n - (n + 3) / 4;  // index of the last term before the final quarter
    const double before = cut == 0 ? 0.0 : partial_sums[cut - 1];
    return (total - before) / total;
  }
};

inline SeriesSummary diagnostics_series(const std::vector<IterationRecord>& trace) {
  SeriesSummary out;
  if (trace.empty()) return out;
  const std::size_t m = trace.front().step_gains.size();
  for (const auto& rec : trace) {
    if (rec.sin_theta_sq.size() != m || rec.sigma_min.size() != m || rec.proj_residual_sq.size() != m) {
      throw std::invalid_argument("diagnostics_series: trace was recorded without diagnostics");
    }
  }
  out.step_series.assign(m, {});
  out.projection_series.assign(m, {});
  for (const auto& rec : trace) {
    out.projection_residuals.push_back(rec.proj_residual_sq);
    for (std::size_t l = 0; l < m; ++l) {
      const double a = rec.sigma_min[l] * rec.sin_theta_sq[l];
      const double b = rec.sigma_min[l] * rec.proj_residual_sq[l];
      const double prev_a = out.step_series[l].empty() ? 0.0 : out.step_series[l].back();
      const double prev_b = out.projection_series[l].empty() ? 0.0 : out.projection_series[l].back();
      out.step_series[l].push_back(prev_a + a);
      out.projection_series[l].push_back(prev_b + b);
      if (!std::isfinite(prev_a + a) || !std::isfinite(prev_b + b) || a < 0 || b < 0) {
        out.finite_and_nondecreasing = false;
      }
    }
  }
  return out;
}

}  // namespace ptbd
