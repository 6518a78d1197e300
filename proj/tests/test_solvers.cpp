#include <gtest/gtest.h>

#include <complex>

#include <Eigen/Eigenvalues>

#include "test_support.hpp"

using namespace ptbd;
using cd = std::complex<double>;

namespace {

template <typename Scalar>
struct Planted {
  ProblemInstance<Scalar> inst;
  ProblemBinding<Scalar> binding;
  FactorTuple<Scalar> init;
};

template <typename Scalar>
Planted<Scalar> planted(std::vector<Index> dims, const std::string& blocks, double eta, std::uint64_t seed) {
  ProblemSpec spec{std::move(dims), BlockPartition::parse(blocks), eta, field_of<Scalar>(), seed};
  auto inst = generate_problem<Scalar>(spec);
  ProblemBinding<Scalar> binding(inst.B, spec.partition);
  auto init = initial_factors<Scalar>(InitKind::random, spec.dims, spec.partition, seed + 1000);
  return {std::move(inst), std::move(binding), std::move(init)};
}

// W (W^H W)^{-1/2} through a Hermitian eigendecomposition.
template <typename Scalar>
Matrix<Scalar> polar_by_eigen(const Matrix<Scalar>& w) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(w.adjoint() * w);
  const auto inv_sqrt = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  return w * (eig.eigenvectors() * inv_sqrt.template cast<Scalar>().asDiagonal() * eig.eigenvectors().adjoint());
}

}  // namespace

TEST(Npdo, ZeroTensorConvergesImmediately) {
  const auto part = BlockPartition::parse("1,1x1,1x1,1");
  const ProblemBinding<double> pb(DenseTensor<double>({4, 3, 3}), part);
  Rng rng(1);
  const auto r = npdo_solve(pb, random_factors<double>({4, 3, 3}, part, rng), SolverConfig{});
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_EQ(r.iterations, 1);
  for (const auto& rec : r.trace) EXPECT_EQ(rec.objective, 0.0);
  const auto series = diagnostics_series(r.trace);
  for (const auto& s : series.step_series) EXPECT_EQ(s.back(), 0.0);
  for (const auto& s : series.projection_series) EXPECT_EQ(s.back(), 0.0);
}

TEST(Npdo, RejectsBadInitialFactors) {
  auto pp = planted<double>({8, 7, 6}, "1,1x2,1x1,1", 0.0, 2);
  auto bad = pp.init;
  bad[1] *= 2.0;
  EXPECT_THROW(npdo_solve(pp.binding, bad, SolverConfig{}), std::invalid_argument);
  bad = pp.init;
  bad.pop_back();
  EXPECT_THROW(npdo_solve(pp.binding, bad, SolverConfig{}), std::invalid_argument);
  SolverConfig cfg;
  cfg.inner_fraction = 1.5;
  EXPECT_THROW(npdo_solve(pp.binding, pp.init, cfg), std::invalid_argument);
}

TEST(Npdo, ConvergesOnPlantedInstanceWithConsistentResult) {
  auto pp = planted<double>({14, 13, 12}, "2,2x3,3x2,2", 0.0, 3);
  const auto r = npdo_solve(pp.binding, pp.init, SolverConfig{});
  ASSERT_EQ(r.status, SolveStatus::converged);
  EXPECT_LE(r.kkt_cheap, 1e-9);
  EXPECT_LE(r.objective, planted_mass(pp.inst) * (1 + 1e-8));
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_LE(orthonormality_error(r.factors[l]), 1e-12);
    EXPECT_EQ(r.multipliers[l], r.multipliers[l].adjoint());
    // locg residual at the end is small in normalized terms
    EXPECT_LE(locg_residual(pp.binding.tensor(), r.factors, pp.binding.partition(), l).norm(),
              1e-8 * pp.binding.kkt_scale(l));
  }
  EXPECT_NEAR(r.objective, bdiag_norm_sq(r.blocks), 1e-12 * r.objective);
  EXPECT_NEAR(r.objective, r.trace.back().objective, 1e-10 * r.objective);
  EXPECT_TRUE(r.trace.back().kkt_full.has_value());
}

TEST(Npdo, MonotoneWithNonnegativeGainsAndOneStepBound) {
  auto pp = planted<cd>({9, 8, 7}, "1,2x2,2x1,1", 0.05, 4);
  SolverConfig cfg;
  cfg.max_outer = 200;
  const auto r = npdo_solve(pp.binding, pp.init, cfg);
  const double nb2 = pp.binding.norm() * pp.binding.norm();
  double prev = r.initial_objective;
  for (const auto& rec : r.trace) {
    for (std::size_t l = 0; l < 3; ++l) {
      EXPECT_GE(rec.step_gains[l], -1e-10 * nb2);
      EXPECT_GE(rec.mode_objectives[l], prev + rec.step_gains[l] - 1e-9 * nb2);
      prev = rec.mode_objectives[l];
    }
  }
  for (std::size_t j = 1; j < r.trace.size(); ++j) {
    EXPECT_GE(r.trace[j].objective, r.trace[j - 1].objective - 1e-12 * std::max(1.0, r.trace[j - 1].objective));
  }
}

TEST(Npdo, TuckerCaseMatchesIndependentSweep) {
  auto pp = planted<double>({7, 6, 5}, "3x2x2", 0.3, 5);
  const auto& b = pp.binding.tensor();
  SolverConfig cfg;
  cfg.max_outer = 20;
  cfg.tol_kkt = 1e-300;
  const auto r = npdo_solve(pp.binding, pp.init, cfg);

  auto p = pp.init;
  for (int j = 0; j < 20; ++j) {
    for (std::size_t l = 0; l < 3; ++l) {
      DenseTensor<double> t = b;
      for (std::size_t i = 0; i < 3; ++i) {
        if (i != l) t = oracle::mode_multiply(t, Matrix<double>(p[i].adjoint()), i);
      }
      const Matrix<double> c = oracle::unfold(t, l);
      p[l] = polar_by_eigen<double>(c * (c.adjoint() * p[l]));
    }
    const double f = oracle::objective(b, p, pp.binding.partition());
    EXPECT_LT(oracle::rel(r.trace[j].objective, f), 1e-10) << "sweep " << j;
  }
}

TEST(Npdo, StatusReporting) {
  auto pp = planted<double>({10, 9, 8}, "2,1x1,2x2,1", 0.0, 6);
  SolverConfig cfg;
  cfg.max_outer = 2;
  EXPECT_EQ(npdo_solve(pp.binding, pp.init, cfg).status, SolveStatus::max_iter);

  cfg = SolverConfig{};
  const auto done = npdo_solve(pp.binding, pp.init, cfg);
  ASSERT_EQ(done.status, SolveStatus::converged);
  // An unreachable tolerance from a converged point leaves the objective flat.
  cfg.tol_kkt = 1e-300;
  const auto stalled = npdo_solve(pp.binding, done.factors, cfg);
  EXPECT_EQ(stalled.status, SolveStatus::stalled);
  ASSERT_GE(stalled.iterations, cfg.stall_window);
  const auto& t = stalled.trace;
  for (std::size_t j = t.size() - std::size_t(cfg.stall_window); j < t.size(); ++j) {
    const double before = j ? t[j - 1].objective : stalled.initial_objective;
    EXPECT_LT(std::abs(t[j].objective - before) / t[j].objective, cfg.stall_rel_change);
    EXPECT_GT(t[j].kkt_cheap, cfg.tol_kkt);
  }
}

TEST(Npdo, ObjectiveStopRequiresBothCriteria) {
  auto pp = planted<double>({10, 9, 8}, "2,1x1,2x2,1", 0.01, 7);
  SolverConfig cfg;
  cfg.use_obj_stop = true;
  const auto r = npdo_solve(pp.binding, pp.init, cfg);
  ASSERT_EQ(r.status, SolveStatus::converged);
  const auto& t = r.trace;
  ASSERT_GE(t.size(), 2u);
  EXPECT_LE(std::abs(t.back().objective - t[t.size() - 2].objective), cfg.tol_obj * t.back().objective);
  EXPECT_LE(t.back().kkt_cheap, cfg.tol_kkt);
}

TEST(Npdo, GaugeRobustFinalObjective) {
  auto pp = planted<double>({12, 11, 10}, "2,2x2,2x1,1", 0.0, 8);
  Rng rng(80);
  auto rotated = pp.init;
  const auto& part = pp.binding.partition();
  for (std::size_t l = 0; l < 3; ++l) {
    Matrix<double> q = Matrix<double>::Zero(part.total(l), part.total(l));
    for (std::size_t s = 0; s < part.block_count(); ++s) {
      const Index k = part.block_size(l, s);
      q.block(part.offset(l, s), part.offset(l, s), k, k) = random_orthonormal<double>(k, k, rng);
    }
    rotated[l] = pp.init[l] * q;
  }
  const auto a = npdo_solve(pp.binding, pp.init, SolverConfig{});
  const auto b = npdo_solve(pp.binding, rotated, SolverConfig{});
  ASSERT_EQ(a.status, SolveStatus::converged);
  ASSERT_EQ(b.status, SolveStatus::converged);
  EXPECT_LT(oracle::rel(a.objective, b.objective), 1e-8);
}

TEST(AccNpdo, ReducedObjectiveIdentity) {
  auto pp = planted<cd>({9, 8, 7}, "1,2x2,1x1,1", 0.1, 9);
  const auto& b = pp.binding.tensor();
  const auto& part = pp.binding.partition();
  Rng rng(90);
  FactorTuple<cd> s, y, sy;
  DenseTensor<cd> reduced = b;
  for (std::size_t l = 0; l < 3; ++l) {
    const Matrix<cd> r = locg_residual(b, pp.init, part, l);
    s.push_back(orth_complement_extend<cd>(pp.init[l], r));
    EXPECT_LE(s.back().cols(), 2 * part.total(l));
    EXPECT_TRUE(s.back().leftCols(part.total(l)) == pp.init[l]);
    reduced = mode_multiply(reduced, Matrix<cd>(s.back().adjoint()), l);
    y.push_back(random_orthonormal<cd>(s.back().cols(), part.total(l), rng));
    sy.push_back(s.back() * y.back());
  }
  EXPECT_LT(oracle::rel(objective_value(reduced, y, part), objective_value(b, sy, part)), 1e-12);
}

TEST(AccNpdo, ConvergesInFewerOuterIterations) {
  auto pp = planted<double>({16, 15, 14}, "2,2,2x3,3,3x2,2,2", 0.02, 10);
  const auto n = npdo_solve(pp.binding, pp.init, SolverConfig{});
  const auto a = accnpdo_solve(pp.binding, pp.init, SolverConfig{});
  ASSERT_EQ(n.status, SolveStatus::converged);
  ASSERT_EQ(a.status, SolveStatus::converged);
  EXPECT_LE(a.kkt_cheap, 1e-9);
  EXPECT_LT(a.iterations, n.iterations);
  double prev = a.initial_objective;
  for (std::size_t j = 0; j < a.trace.size(); ++j) {
    const auto& rec = a.trace[j];
    EXPECT_GE(rec.objective, prev - 1e-12 * std::max(1.0, prev));
    prev = rec.objective;
    ASSERT_TRUE(rec.inner_iterations.has_value());
    EXPECT_GE(*rec.inner_iterations, 1);
    EXPECT_LE(*rec.inner_iterations, SolverConfig{}.max_inner);
    if (j + 1 < a.trace.size()) {
      ASSERT_TRUE(rec.step_gain_ratio.has_value());
      EXPECT_GT(*rec.step_gain_ratio, 0.0);
    }
  }
  for (const auto& p : a.factors) EXPECT_LE(orthonormality_error(p), 1e-12);
}

TEST(AccNpdo, ComplexInstance) {
  auto pp = planted<cd>({10, 9, 8}, "2,1x1,2x2,2", 0.01, 11);
  const auto a = accnpdo_solve(pp.binding, pp.init, SolverConfig{});
  EXPECT_EQ(a.status, SolveStatus::converged);
  EXPECT_LE(a.kkt_full, 1e-8);
}

TEST(DiagnosticsSeries, SingleIterationAndMissingData) {
  auto pp = planted<double>({8, 7, 6}, "1,1x2,1x1,1", 0.1, 12);
  SolverConfig cfg;
  cfg.max_outer = 1;
  const auto r = npdo_solve(pp.binding, pp.init, cfg);
  const auto s = diagnostics_series(r.trace);
  for (std::size_t l = 0; l < 3; ++l) {
    ASSERT_EQ(s.step_series[l].size(), 1u);
    EXPECT_EQ(s.step_series[l][0], r.trace[0].sigma_min[l] * r.trace[0].sin_theta_sq[l]);
    EXPECT_EQ(s.projection_series[l][0], r.trace[0].sigma_min[l] * r.trace[0].proj_residual_sq[l]);
  }
  cfg.record_diagnostics = false;
  EXPECT_THROW(diagnostics_series(npdo_solve(pp.binding, pp.init, cfg).trace), std::invalid_argument);
}

TEST(DiagnosticsSeries, ConvergedRunTailIsSmall) {
  auto pp = planted<double>({14, 13, 12}, "2,2x3,3x2,2", 0.01, 13);
  const auto r = npdo_solve(pp.binding, pp.init, SolverConfig{});
  ASSERT_EQ(r.status, SolveStatus::converged);
  const auto s = diagnostics_series(r.trace);
  EXPECT_TRUE(s.finite_and_nondecreasing);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_LT(SeriesSummary::last_quarter_fraction(s.step_series[l]), 0.01);
    EXPECT_LT(SeriesSummary::last_quarter_fraction(s.projection_series[l]), 0.01);
  }
}

TEST(DiagnosticsSeries, LastQuarterFraction) {
  EXPECT_DOUBLE_EQ(SeriesSummary::last_quarter_fraction({1, 2, 3, 4}), 0.25);
  EXPECT_DOUBLE_EQ(SeriesSummary::last_quarter_fraction({5}), 1.0);
  EXPECT_DOUBLE_EQ(SeriesSummary::last_quarter_fraction({0, 0}), 0.0);
}
