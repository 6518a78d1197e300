// Command-line front end: generate problems, solve them, and run sweeps.
#include <CLI11.hpp>

#include <complex>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <variant>

#include "ptbd/ptbd.hpp"

namespace {

using namespace ptbd;

constexpr int kExitIo = 1;

int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return 0;
    case SolveStatus::max_iter: return 2;
    case SolveStatus::stalled: return 3;
  }
  return kExitIo;
}

struct GenerateArgs {
  std::string dims = "60,55,50";
  std::string blocks = "2,2,2,2x3,3,3,3x2,2,2,2";
  double eta = 0.0078125;
  std::string field = "real";
  std::uint64_t seed = 42;
  std::string out;
};

int run_generate(const GenerateArgs& a) {
  ProblemSpec spec{parse_dims(a.dims), BlockPartition::parse(a.blocks), a.eta, field_from_string(a.field), a.seed};
  if (spec.field == Field::real) {
    write_dten(a.out, generate_problem<double>(spec).B);
  } else {
    write_dten(a.out, generate_problem<std::complex<double>>(spec).B);
  }
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct SolveArgs {
  std::string input;
  std::string blocks;
  std::string method = "npdo";
  double tol_kkt = 1e-9;
  double tol_obj = 1e-12;
  bool obj_stop = false;
  int max_outer = 2000;
  int max_inner = 50;
  double inner_fraction = 0.125;
  std::string trace;
  std::string summary;
  std::string factors_out;
  std::string init = "random";
  std::uint64_t seed = 0;
};

template <typename Scalar>
void write_factors(const std::string& dir, const FactorTuple<Scalar>& factors) {
  std::filesystem::create_directories(dir);
  for (std::size_t l = 0; l < factors.size(); ++l) {
    // A factor is stored as an order-2 tensor (n_l x k_l, column-major).
    DenseTensor<Scalar> t({factors[l].rows(), factors[l].cols()});
    t.vec() = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(factors[l].data(), factors[l].size());
    write_dten(dir + "/P" + std::to_string(l + 1) + ".dten", t);
  }
}

template <typename Scalar>
int solve_typed(DenseTensor<Scalar> b, const SolveArgs& a) {
  const Method method = method_from_string(a.method);
  const BlockPartition partition = BlockPartition::parse(a.blocks);
  SolverConfig cfg;
  cfg.tol_kkt = a.tol_kkt;
  cfg.tol_obj = a.tol_obj;
  cfg.use_obj_stop = a.obj_stop;
  cfg.max_outer = a.max_outer;
  cfg.max_inner = a.max_inner;
  cfg.inner_fraction = a.inner_fraction;
  cfg.seed = a.seed;

  const ProblemBinding<Scalar> binding(std::move(b), partition);
  const InitKind init = a.init == "identity" ? InitKind::identity : InitKind::random;
  if (a.init != "identity" && a.init != "random") throw CLI::ValidationError("--init", "must be random or identity");
  const auto p0 = initial_factors<Scalar>(init, binding.tensor().dims(), partition, a.seed);
  const SolveResult<Scalar> r = solve(method, binding, p0, cfg);

  RunSummary s = summarize(method, binding, r);
  s.seed = a.seed;
  if (!a.trace.empty()) write_trace_csv(a.trace, r.trace);
  if (!a.summary.empty()) write_summary_json(a.summary, s);
  if (!a.factors_out.empty()) write_factors(a.factors_out, r.factors);

  std::cout << a.method << ": " << s.status << " after " << s.iterations << " iterations, objective " << s.objective
            << ", kkt " << s.kkt_cheap << " (full " << s.kkt_full << "), reconstruction error "
            << s.reconstruction_error << ", " << s.elapsed_seconds << " s\n";
  return exit_code(r.status);
}

int run_solve(const SolveArgs& a) {
  AnyTensor t = read_dten(a.input);
  return std::visit([&](auto& b) { return solve_typed(std::move(b), a); }, t);
}

struct BenchArgs {
  std::string eta_from = "2^-8";
  std::string eta_to = "2^-3";
  std::string sizes = "1";
  std::string base_dims = "60,55,50";
  std::string blocks = "2,2,2,2x3,3,3,3x2,2,2,2";
  int repeats = 1;
  std::string method = "both";
  std::string field = "real";
  std::uint64_t seed = 1;
  bool independent = false;
  int max_outer = 2000;
  std::string out = "report";
};

int run_bench(const BenchArgs& a) {
  const auto etas = eta_sweep(parse_real_literal(a.eta_from), parse_real_literal(a.eta_to));
  const auto sizes = parse_int_range(a.sizes);
  const auto base = parse_dims(a.base_dims);
  const BlockPartition partition = BlockPartition::parse(a.blocks);
  const Field field = field_from_string(a.field);

  std::vector<ProblemSpec> specs;
  for (int s : sizes) {
    std::vector<Index> dims;
    for (Index n : base) dims.push_back(n * s);
    for (int rep = 0; rep < a.repeats; ++rep) {
      for (std::size_t e = 0; e < etas.size(); ++e) {
        const std::uint64_t seed = sweep_seed(a.seed + std::uint64_t(rep), e, !a.independent);
        specs.push_back({dims, partition, etas[e], field, seed});
      }
    }
  }

  std::vector<Method> methods;
  if (a.method == "both") {
    methods = {Method::npdo, Method::accnpdo};
  } else {
    methods = {method_from_string(a.method)};
  }

  SolverConfig cfg;
  cfg.max_outer = a.max_outer;
  std::filesystem::create_directories(a.out);
  std::ofstream table(a.out + "/summary.csv");
  if (!table) throw std::runtime_error("cannot write " + a.out + "/summary.csv");
  table << "method,dims,eta,seed,status,iterations,inner_iterations,objective,kkt_cheap,kkt_full,elapsed_seconds,"
           "reconstruction_error,error\n";
  int failures = 0;
  for (Method m : methods) {
    ExperimentOptions opts;
    opts.out_dir = a.out;
    const ExperimentReport rep = run_experiment(specs, m, cfg, opts);
    for (const auto& run : rep.runs) {
      const RunSummary& s = run.summary;
      std::string dims;
      for (std::size_t i = 0; i < s.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(s.dims[i]);
      table << s.method << ',' << dims << ',' << s.eta << ',' << s.seed << ',' << s.status << ',' << s.iterations
            << ',' << s.inner_iterations << ',' << s.objective << ',' << s.kkt_cheap << ',' << s.kkt_full << ','
            << s.elapsed_seconds << ',' << s.reconstruction_error << ',' << (s.error ? *s.error : "") << '\n';
      std::cout << s.method << " dims=" << dims << " eta=" << s.eta << " " << s.status << " iters=" << s.iterations
                << " time=" << s.elapsed_seconds << "s\n";
      if (!s.ok()) ++failures;
    }
  }
  return failures ? kExitIo : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Principal tensor block-diagonalization"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a random planted problem as a DTEN1 file");
  g->add_option("--dims", gen.dims, "Tensor dimensions, comma separated")->capture_default_str();
  g->add_option("--blocks", gen.blocks, "Block partition literal")->capture_default_str();
  g->add_option("--eta", gen.eta, "Noise level")->capture_default_str()->check(CLI::NonNegativeNumber);
  g->add_option("--field", gen.field, "real or complex")->capture_default_str()->check(CLI::IsMember({"real", "complex"}));
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output path")->required();

  SolveArgs sol;
  auto* s = app.add_subcommand("solve", "Solve a DTEN1 tensor");
  s->add_option("--input", sol.input, "Input DTEN1 file")->required();
  s->add_option("--blocks", sol.blocks, "Block partition literal")->required();
  s->add_option("--method", sol.method, "npdo or accnpdo")->capture_default_str()->check(CLI::IsMember({"npdo", "accnpdo"}));
  s->add_option("--tol-kkt", sol.tol_kkt, "KKT residual tolerance")->capture_default_str();
  s->add_option("--tol-obj", sol.tol_obj, "Relative objective change tolerance")->capture_default_str();
  s->add_flag("--obj-stop", sol.obj_stop, "Also require the objective criterion");
  s->add_option("--max-outer", sol.max_outer, "Maximum outer iterations")->capture_default_str();
  s->add_option("--max-inner", sol.max_inner, "Maximum inner sweeps (accnpdo)")->capture_default_str();
  s->add_option("--inner-fraction", sol.inner_fraction, "Inner tolerance fraction (accnpdo)")->capture_default_str();
  s->add_option("--trace", sol.trace, "Per-iteration CSV output");
  s->add_option("--summary", sol.summary, "JSON summary output");
  s->add_option("--factors-out", sol.factors_out, "Directory for P1.dten .. Pm.dten");
  s->add_option("--init", sol.init, "random or identity")->capture_default_str();
  s->add_option("--seed", sol.seed, "Seed for random initial factors")->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Run eta and size sweeps");
  b->add_option("--eta-from", bench.eta_from, "Smallest eta, e.g. 2^-8")->capture_default_str();
  b->add_option("--eta-to", bench.eta_to, "Largest eta")->capture_default_str();
  b->add_option("--sizes", bench.sizes, "Size multipliers, e.g. 1..8")->capture_default_str();
  b->add_option("--base-dims", bench.base_dims, "Dimensions at size 1")->capture_default_str();
  b->add_option("--blocks", bench.blocks, "Block partition literal")->capture_default_str();
  b->add_option("--repeats", bench.repeats, "Instances per (size, eta)")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--method", bench.method, "npdo, accnpdo or both")->capture_default_str()->check(CLI::IsMember({"npdo", "accnpdo", "both"}));
  b->add_option("--field", bench.field, "real or complex")->capture_default_str()->check(CLI::IsMember({"real", "complex"}));
  b->add_option("--seed", bench.seed, "Base seed")->capture_default_str();
  b->add_flag("--independent", bench.independent, "Fresh draws for every eta instead of a shared base");
  b->add_option("--max-outer", bench.max_outer, "Maximum outer iterations")->capture_default_str();
  b->add_option("--out", bench.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitIo;
  }

  try {
    if (*g) return run_generate(gen);
    if (*s) return run_solve(sol);
    if (*b) return run_bench(bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitIo;
}
