#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptbd/block_structure.hpp"
#include "ptbd/random.hpp"
#include "ptbd/tensor.hpp"

namespace ptbd {

struct ProblemSpec {
  std::vector<Index> dims;
  BlockPartition partition;
  double eta = 0;
  Field field = Field::real;
  std::uint64_t seed = 0;

  void validate() const {
    partition.check_fits(dims);
    if (!(eta >= 0)) throw std::invalid_argument("ProblemSpec: eta must be nonnegative");
  }
};

template <typename Scalar>
struct ProblemInstance {
  DenseTensor<Scalar> B;
  ProblemSpec spec;
  std::vector<DenseTensor<Scalar>> planted_blocks;
  std::vector<Matrix<Scalar>> Q;  // square orthonormal rotations, one per mode
  double noise_norm = 0;          // ||E||_F
};

/// B = (T + eta E) x_1 Q_1 ... x_m Q_m with T holding independent normal
/// diagonal blocks in its leading corner. Draw order: the blocks of T, then
/// E, then Q_1..Q_m. Two specs that differ only in eta therefore share T, E
/// and Q.
template <typename Scalar>
ProblemInstance<Scalar> generate_problem(const ProblemSpec& spec) {
  spec.validate();
  if (spec.field != field_of<Scalar>()) throw std::invalid_argument("generate_problem: field does not match scalar type");
  const BlockPartition& part = spec.partition;
  Rng rng(spec.seed);

  ProblemInstance<Scalar> inst;
  inst.spec = spec;
  for (std::size_t s = 0; s < part.block_count(); ++s) {
    inst.planted_blocks.push_back(random_normal_tensor<Scalar>(part.block_dims(s), rng));
  }
  DenseTensor<Scalar> t(spec.dims);
  for (std::size_t s = 0; s < part.block_count(); ++s) assign_subtensor(t, part.block_offsets(s), inst.planted_blocks[s]);

  const DenseTensor<Scalar> e = random_normal_tensor<Scalar>(spec.dims, rng);
  inst.noise_norm = frobenius_norm(e);
  t.vec() += RealOf<Scalar>(spec.eta) * e.vec();

  for (std::size_t l = 0; l < spec.dims.size(); ++l) {
    inst.Q.push_back(random_orthonormal<Scalar>(spec.dims[l], spec.dims[l], rng));
  }
  for (std::size_t l = 0; l < spec.dims.size(); ++l) t = mode_multiply(t, inst.Q[l], l);
  inst.B = std::move(t);
  return inst;
}

/// Leading k_l columns of each planted rotation.
template <typename Scalar>
FactorTuple<Scalar> planted_factors(const ProblemInstance<Scalar>& inst) {
  FactorTuple<Scalar> out;
  for (std::size_t l = 0; l < inst.Q.size(); ++l) out.push_back(inst.Q[l].leftCols(inst.spec.partition.total(l)));
  return out;
}

template <typename Scalar>
double planted_mass(const ProblemInstance<Scalar>& inst) {
  return double(bdiag_norm_sq(inst.planted_blocks));
}

/// Seed for the `index`-th member of an eta sweep. Shared-base sweeps reuse
/// the base seed so every member sees the same T, E and Q.
inline std::uint64_t sweep_seed(std::uint64_t base, std::size_t index, bool shared_base) {
  if (shared_base) return base;
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace ptbd
