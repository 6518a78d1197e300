#include <gtest/gtest.h>

#include <complex>

#include "test_support.hpp"

using namespace ptbd;
using cd = std::complex<double>;

namespace {

template <typename Scalar>
Matrix<Scalar> loop_contraction(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& p, const BlockPartition& part,
                                std::size_t mode, std::size_t s) {
  DenseTensor<Scalar> t = b;
  for (std::size_t i = 0; i < b.order(); ++i) {
    if (i == mode) continue;
    const Matrix<Scalar> ph = p[i].middleCols(part.offset(i, s), part.block_size(i, s)).adjoint();
    t = oracle::mode_multiply(t, ph, i);
  }
  return oracle::unfold(t, mode);
}

// [H_1 P_1, ..., H_t P_t] with H_s = C_s C_s^H formed explicitly.
template <typename Scalar>
Matrix<Scalar> gram_gradient(const DenseTensor<Scalar>& b, const FactorTuple<Scalar>& p, const BlockPartition& part,
                             std::size_t mode) {
  Matrix<Scalar> g(p[mode].rows(), p[mode].cols());
  for (std::size_t s = 0; s < part.block_count(); ++s) {
    const Matrix<Scalar> c = loop_contraction(b, p, part, mode, s);
    const Matrix<Scalar> h = c * c.adjoint();
    g.middleCols(part.offset(mode, s), part.block_size(mode, s)) =
        h * p[mode].middleCols(part.offset(mode, s), part.block_size(mode, s));
  }
  return g;
}

struct Fixture {
  DenseTensor<double> b;
  BlockPartition part;
  FactorTuple<double> p;
};

Fixture random_fixture(std::uint64_t seed) {
  Rng rng(seed);
  auto part = BlockPartition::parse("1,2x2,1x1,1");
  auto b = random_normal_tensor<double>({5, 4, 3}, rng);
  auto p = random_factors<double>(b.dims(), part, rng);
  return {std::move(b), std::move(part), std::move(p)};
}

}  // namespace

TEST(ProblemBinding, CachesNormsAndChecksFit) {
  Rng rng(1);
  auto b = random_normal_tensor<double>({4, 5, 3}, rng);
  const ProblemBinding<double> pb(b, BlockPartition::parse("1,1x2,2x1,1"));
  EXPECT_NEAR(pb.norm(), frobenius_norm(b), 1e-14 * pb.norm());
  for (std::size_t l = 0; l < 3; ++l) {
    const double truth = Eigen::JacobiSVD<Matrix<double>>(unfold(b, l)).singularValues()(0);
    EXPECT_GE(pb.unfold_norm(l), truth * (1 - 1e-3));
    EXPECT_LE(pb.unfold_norm(l), 2 * truth);
  }
  EXPECT_THROW(ProblemBinding<double>(b, BlockPartition::parse("3,3x1,1x1,1")), std::invalid_argument);
}

TEST(Contraction, CoordinateSelection) {
  Rng rng(2);
  const auto b = random_normal_tensor<double>({4, 5, 3}, rng);
  const auto part = BlockPartition::parse("2x3x2");
  const auto p = identity_factors<double>(b.dims(), part);
  EXPECT_EQ(contraction(b, p, part, 0, 0), unfold(subtensor(b, {0, 0, 0}, {4, 3, 2}), 0));
}

TEST(Contraction, MatchesLoopOracleAndSumsToObjective) {
  for (std::uint64_t seed = 3; seed < 8; ++seed) {
    const auto fx = random_fixture(seed);
    const double f = objective_value(fx.b, fx.p, fx.part);
    EXPECT_LT(oracle::rel(f, oracle::objective(fx.b, fx.p, fx.part)), 1e-12);
    for (std::size_t l = 0; l < 3; ++l) {
      double acc = 0;
      for (std::size_t s = 0; s < 2; ++s) {
        const Matrix<double> c = contraction(fx.b, fx.p, fx.part, l, s);
        EXPECT_LT(oracle::rel_diff(c, loop_contraction(fx.b, fx.p, fx.part, l, s)), 1e-13);
        acc += (factor_block(fx.p[l], fx.part, l, s).adjoint() * c).squaredNorm();
      }
      EXPECT_LT(oracle::rel(acc, f), 1e-12);
    }
  }
}

TEST(Contraction, ZeroTensor) {
  Rng rng(9);
  const auto part = BlockPartition::parse("1x1x1");
  const DenseTensor<double> z({3, 3, 3});
  const auto p = random_factors<double>(z.dims(), part, rng);
  EXPECT_EQ(contraction(z, p, part, 1, 0).norm(), 0.0);
  EXPECT_EQ(objective_value(z, p, part), 0.0);
  EXPECT_EQ(partial_gradient(z, p, part, 2).norm(), 0.0);
  EXPECT_EQ(locg_residual(z, p, part, 0).norm(), 0.0);
  EXPECT_EQ(kkt_residual_full(ProblemBinding<double>(z, part), p), 0.0);
}

TEST(Objective, UnitBlocksOfSmallTensor) {
  const auto t = oracle::iota_tensor({2, 2, 2});
  const auto part = BlockPartition::parse("1,1x1,1x1,1");
  EXPECT_NEAR(objective_value(t, identity_factors<double>(t.dims(), part), part), 65.0, 1e-13);
}

TEST(Objective, ThreeDualFormulasAgree) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const auto part = BlockPartition::parse("1,2x2,1x1,2");
    const auto b = random_normal_tensor<cd>({5, 4, 4}, rng);
    const auto p = random_factors<cd>(b.dims(), part, rng);
    const double f1 = bdiag_norm_sq(bdiag_extract(core_tensor(b, p), part));
    const double f2 = objective_value(b, p, part);
    double f3 = 0;
    for (std::size_t s = 0; s < 2; ++s) {
      const Matrix<cd> c = contraction(b, p, part, 1, s);
      const Matrix<cd> ps = factor_block(p[1], part, 1, s);
      f3 += std::real((ps.adjoint() * (c * c.adjoint()) * ps).trace());
    }
    EXPECT_LT(oracle::rel(f1, f2), 1e-12);
    EXPECT_LT(oracle::rel(f2, f3), 1e-12);
    EXPECT_LE(f2, b.vec().squaredNorm());
    EXPECT_GE(f2, 0.0);
  }
}

TEST(Objective, BlockDiagonalGaugeInvariance) {
  Rng rng(11);
  const auto part = BlockPartition::parse("2,1x1,2x2,2");
  const auto b = random_normal_tensor<cd>({5, 5, 6}, rng);
  const auto p = random_factors<cd>(b.dims(), part, rng);
  FactorTuple<cd> g = p;
  for (std::size_t l = 0; l < 3; ++l) {
    Matrix<cd> q = Matrix<cd>::Zero(part.total(l), part.total(l));
    for (std::size_t s = 0; s < 2; ++s) {
      const Index k = part.block_size(l, s);
      q.block(part.offset(l, s), part.offset(l, s), k, k) = random_orthonormal<cd>(k, k, rng);
    }
    g[l] = p[l] * q;
  }
  EXPECT_LT(oracle::rel(objective_value(b, g, part), objective_value(b, p, part)), 1e-12);
}

TEST(PartialGradient, MatchesExplicitGram) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto part = BlockPartition::parse("1,2x2,1x1,1");
    const auto b = random_normal_tensor<cd>({4, 5, 3}, rng);
    auto p = random_factors<cd>(b.dims(), part, rng);
    p[1] = random_normal_matrix<cd>(5, 3, rng);  // the differentiated factor need not be orthonormal
    EXPECT_LT(oracle::rel_diff(partial_gradient(b, p, part, 1), gram_gradient(b, p, part, 1)), 1e-12);
  }
}

TEST(PartialGradient, CentralDifferencesMatchTwiceH) {
  const double h = 1e-5;
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const auto fx = random_fixture(seed);
    for (std::size_t l = 0; l < 3; ++l) {
      const Matrix<double> g = 2.0 * partial_gradient(fx.b, fx.p, fx.part, l);
      Matrix<double> fd(g.rows(), g.cols());
      for (Index i = 0; i < g.rows(); ++i) {
        for (Index j = 0; j < g.cols(); ++j) {
          auto plus = fx.p, minus = fx.p;
          plus[l](i, j) += h;
          minus[l](i, j) -= h;
          fd(i, j) = (oracle::objective(fx.b, plus, fx.part) - oracle::objective(fx.b, minus, fx.part)) / (2 * h);
        }
      }
      EXPECT_LE((fd - g).cwiseAbs().maxCoeff(), 1e-6 * g.cwiseAbs().maxCoeff());
    }
  }
}

TEST(PartialGradient, ComplexDirectionalDerivative) {
  Rng rng(30);
  const auto part = BlockPartition::parse("1,1x2,1x1,1");
  const auto b = random_normal_tensor<cd>({4, 4, 3}, rng);
  const auto p = random_factors<cd>(b.dims(), part, rng);
  const double h = 1e-5;
  for (std::size_t l = 0; l < 3; ++l) {
    const Matrix<cd> g = 2.0 * partial_gradient(b, p, part, l);
    for (int d = 0; d < 5; ++d) {
      const Matrix<cd> dir = random_normal_matrix<cd>(p[l].rows(), p[l].cols(), rng);
      auto plus = p, minus = p;
      plus[l] += h * dir;
      minus[l] -= h * dir;
      const double fd = (oracle::objective(b, plus, part) - oracle::objective(b, minus, part)) / (2 * h);
      const double an = std::real((dir.adjoint() * g).trace());
      EXPECT_NEAR(fd, an, 1e-6 * std::max(1.0, std::abs(an)));
    }
  }
}

TEST(LocgResidual, ProjectionRemovesHermitianPart) {
  Rng rng(40);
  const auto part = BlockPartition::parse("2,1x1,2x1,1");
  const auto b = random_normal_tensor<cd>({5, 4, 3}, rng);
  const auto p = random_factors<cd>(b.dims(), part, rng);
  for (std::size_t l = 0; l < 3; ++l) {
    const Matrix<cd> r = locg_residual(b, p, part, l);
    const Matrix<cd> m = p[l].adjoint() * r;
    EXPECT_LT((m + m.adjoint()).norm(), 1e-12 * std::max(1.0, r.norm()));
  }
}

TEST(Kkt, RandomPointIsNotStationary) {
  const auto fx = random_fixture(50);
  const ProblemBinding<double> pb(fx.b, fx.part);
  EXPECT_GT(kkt_residual_full(pb, fx.p), 0.0);
}

TEST(Kkt, CheapResidualVanishesWhenAllMassIsOutsideTheBlocks) {
  // Entries only where i_1 >= k_1 and i_2 >= k_2: every contraction against
  // identity columns is zero, so every gradient vanishes.
  const auto part = BlockPartition::parse("1,1x1,1x1,1");
  DenseTensor<double> b({4, 4, 3});
  Rng rng(51);
  std::vector<Index> sub(3, 0);
  do {
    if (sub[0] >= 2 && sub[1] >= 2) b(sub) = rng.normal();
  } while (oracle::next_subscript(sub, b.dims()));
  const ProblemBinding<double> pb(b, part);
  const auto p = identity_factors<double>(b.dims(), part);
  EXPECT_GT(pb.norm(), 0.0);
  EXPECT_EQ(kkt_residual_cheap(pb, p, p), 0.0);
  EXPECT_EQ(objective_value(pb, p), 0.0);
}

TEST(Kkt, CheapAgreesWithFullAtConvergence) {
  ProblemSpec spec{{12, 11, 10}, BlockPartition::parse("2,2x2,2x1,1"), 1e-2, Field::real, 3};
  const auto inst = generate_problem<double>(spec);
  const ProblemBinding<double> pb(inst.B, spec.partition);
  SolverConfig cfg;
  cfg.tol_kkt = 1e-11;
  const auto p0 = initial_factors<double>(InitKind::random, spec.dims, spec.partition, 3);
  auto r = npdo_solve(pb, p0, cfg);
  ASSERT_EQ(r.status, SolveStatus::converged);
  // One further sweep makes staggered and plain tuples nearly identical.
  cfg.max_outer = 1;
  cfg.tol_kkt = 1e-300;
  const auto one = npdo_solve(pb, r.factors, cfg);
  const double cheap = kkt_residual_cheap(pb, r.factors, one.factors);
  const double full = kkt_residual_full(pb, r.factors);
  EXPECT_NEAR(cheap, one.kkt_cheap, 1e-12 + 1e-9 * cheap);
  EXPECT_LE(std::abs(cheap - full), 0.1 * full);
}

TEST(AnsatzInequality, HoldsWithEuclideanGradient) {
  Rng rng(60);
  for (int trial = 0; trial < 50; ++trial) {
    const auto part = BlockPartition::parse("1,2x2,1x1,1");
    const auto b = random_normal_tensor<cd>({4, 5, 3}, rng);
    auto p = random_factors<cd>(b.dims(), part, rng);
    const std::size_t l = std::size_t(trial % 3);
    const Matrix<cd> grad = 2.0 * partial_gradient(b, p, part, l);
    const Matrix<cd> hat = random_orthonormal<cd>(p[l].rows(), p[l].cols(), rng);
    const double eta = std::real((hat.adjoint() * grad).trace()) - std::real((p[l].adjoint() * grad).trace());
    const double f0 = objective_value(b, p, part);
    p[l] = hat;
    EXPECT_GE(objective_value(b, p, part), f0 + eta - 1e-10 * b.vec().squaredNorm());
  }
}

TEST(AnsatzInequality, HalvedGradientFormFailsForNegativeGain) {
  // Single block, one-dimensional factor on mode 0: f(x) = x^T H x with
  // H = diag(1, 0). At x = e1 the halved gradient is H e1 = e1. Moving to
  // (e1 + e2)/sqrt(2) changes f by -1/2 while the halved-gradient gain is
  // 1/sqrt(2) - 1 (about -0.29), so f_new < f_old + gain.
  DenseTensor<double> b({2, 1, 1});
  b[0] = 1.0;
  const auto part = BlockPartition::parse("1x1x1");
  FactorTuple<double> p{Matrix<double>::Identity(2, 1), Matrix<double>::Ones(1, 1), Matrix<double>::Ones(1, 1)};
  const Matrix<double> h = partial_gradient(b, p, part, 0);
  Matrix<double> hat(2, 1);
  hat << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  const double gain_half = (hat.transpose() * h).trace() - (p[0].transpose() * h).trace();
  const double f0 = objective_value(b, p, part);
  p[0] = hat;
  const double f1 = objective_value(b, p, part);
  EXPECT_LT(f1, f0 + gain_half);
  EXPECT_GE(f1, f0 + 2 * gain_half - 1e-15);
}

TEST(SweepContractor, MatchesDirectContractionAndReusesWork) {
  Rng rng(70);
  const auto b = random_normal_tensor<double>({5, 4, 6}, rng);
  const auto part = BlockPartition::parse("2,1x1,2x2,2");
  auto p = random_factors<double>(b.dims(), part, rng);
  SweepContractor<double> sc(b);
  std::vector<std::uint64_t> versions(3, 0);
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (std::size_t l = 0; l < 3; ++l) {
      EXPECT_LT(oracle::rel_diff(sc.contract_all_but(l, p, versions), mode_contraction(b, p, l)), 1e-13);
      p[l] = random_orthonormal<double>(p[l].rows(), p[l].cols(), rng);
      ++versions[l];
    }
  }
  // For three modes the cached single-mode product serves two of every three steps.
  EXPECT_EQ(sc.hits() + sc.misses(), 9u);
  EXPECT_GE(sc.hits(), 4u);
}
